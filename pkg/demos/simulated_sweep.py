"""Run the full harness against a simulated verifier and compare with the closed form.

Each synthetic item has two options. Sweeping the verifier's true-accept rate
q1 shows where binary verification overtakes plain MCQ.
"""

from binverify.harness import RunConfig, run
from binverify.tasks import TaskInstance
from binverify.theory import TwoHypParams, binary_accuracy
from binverify.verifiers import SimulatedVerifier, SimulatorParams

items = [TaskInstance("synthetic", f"s{i}", source={"options": ["yes", "no"]}, ground_truth="yes")
         for i in range(4000)]
q2, p = 0.2, 0.7

print(" q1   harness  closed-form  mcq")
for q1 in (0.5, 0.6, 0.7, 0.8, 0.9):
    verifier = SimulatedVerifier(SimulatorParams(q1, q2, p, seed=11))
    binary = run(RunConfig(mode="binary", render=False), items, verifier)
    mcq = run(RunConfig(mode="mcq", render=False), items, verifier)
    expected = binary_accuracy(TwoHypParams(q1, q2, p))
    print(f"{q1:.1f}   {binary.accuracy:.4f}   {expected:.4f}       {mcq.accuracy:.4f}")

# Per-branch view of the last run, with the MCQ result on the same items alongside.
paired = run(RunConfig(mode="binary", render=False), items, verifier, paired=mcq.records)
print()
print(paired.summary())
