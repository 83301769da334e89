"""Walk through the three verdict patterns and what the resolver does with each."""

from binverify import (
    BooleanPattern,
    Candidate,
    ResolutionConfig,
    ScriptedVerifier,
    resolve,
    run_protocol,
)

shortlist = [
    Candidate("a", "The highlighted box shows the red mug."),
    Candidate("b", "The highlighted box shows the blue mug."),
    Candidate("c", "The highlighted box shows the kettle."),
]
ids = [c.id for c in shortlist]

# Pure decision step: no model involved, just the pattern of verdicts.
for values in ([False, True, False], [True, True, False], [False, False, False]):
    outcome = resolve(BooleanPattern.of(ids, values), shortlist)
    print(f"{values!s:22} -> {outcome.branch.value:14} {outcome.action.value:14} over {list(outcome.ids)}")

# With one retry, an ambiguous first round is re-verified on the True subset only.
outcome = resolve(BooleanPattern.of(ids, [True, True, False]), shortlist, ResolutionConfig(max_retries=1))
print("with a retry left:", outcome.action.value, list(outcome.ids))

# Driving a verifier end to end. Here the verifier accepts two claims,
# so the protocol falls back to a multiple-choice question over those two.
verifier = ScriptedVerifier(
    claims={"a@0": "True", "b@0": "True, it is blue", "c@0": "False"},
    mcq=lambda q: 0,
)
result = run_protocol(shortlist, verifier)
print(f"\nchosen={result.chosen} branch={result.branch.value} "
      f"claims={result.claim_queries} mcq={result.mcq_queries}")
for event in result.trace:
    print("  ", event.to_dict())
