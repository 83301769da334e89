"""Referring-expression run on the bundled mini fixture with a scripted backend.

The same manifest works with ``--backend http`` from the command line once an
endpoint is available; here every reply comes from fixtures.json so the run is
fully offline.
"""

import json
import tempfile
from pathlib import Path

from binverify.harness import RunConfig, load_manifest, run
from binverify.verifiers import ScriptedVerifier

data = Path(__file__).resolve().parent.parent / "tests" / "data" / "rec_mini"
fixtures = json.loads((data / "fixtures.json").read_text())

items = load_manifest(data / "manifest.jsonl")
verifier = ScriptedVerifier(fixtures["claims"], fixtures["mcq"])

with tempfile.TemporaryDirectory() as tmp:
    report = run(RunConfig(), items, verifier, log_path=Path(tmp) / "log.jsonl")
    n_events = len((Path(tmp) / "log.jsonl").read_text().splitlines())

print(report.summary())
print(f"{n_events} logged backend interactions")
print()
print(report.breakdown_csv())
for rec in report.records[:4]:
    print(rec.item_id, rec.branch, rec.pattern, "->", rec.chosen, "correct" if rec.correct else "wrong")
