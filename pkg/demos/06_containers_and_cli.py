"""Serialize a stream to the OTS container format and drive the CLI.

Containers are canonical: the same stream and sections always produce the
same bytes, and reading one back is exact. The CLI subcommands wrap the
library so pipelines can run from files alone; everything here goes through
a temp directory and cleans up after itself.
"""

import json
import pathlib
import tempfile

import numpy as np

from omniprefill import VISUAL, SynthSpec, read_ots, synth_generate, write_ots
from omniprefill.cli import main

spec = SynthSpec(seed=42, T=2, d=8, n_v=6, n_a=3, n_q=4)
stream, oracle = synth_generate(spec)

sections = {"saliency/w0/visual": oracle.saliency(0, VISUAL, 6)}
blob = write_ots(stream, sections, generator=spec.provenance(), T=2)
print(f"container payload: {len(blob)} bytes, magic {blob[:4]!r}")

back, back_sections, header = read_ots(blob)
print(f"round trip exact: {np.array_equal(back.embeddings, stream.embeddings)}")
print(f"header counts: {header['counts']}")
print(f"re-encode identical: {write_ots(back, back_sections, generator=header['generator'], T=header['t']) == blob}")
print()

work = pathlib.Path(tempfile.mkdtemp(prefix="omniprefill_demo_"))
(work / "model.json").write_text(json.dumps({
    "layers": 28, "d_model": 3584, "d_ff": 18944, "n_heads": 28,
    "boundaries": [16, 19, 21, 24]}))
(work / "retention.json").write_text(json.dumps({
    "ratio_visual": 0.30, "ratio_audio": 0.65, "lambda": 1.4, "tau": 0.1}))
(work / "synth.json").write_text(json.dumps({
    "seed": 42, "windows": 4, "d": 16, "visual_per_window": 72,
    "audio_per_window": 12, "text_tokens": 10}))

print("== omniprefill schedule ==")
main(["schedule", "--layers", "28", "--boundaries", "16,19,21,24",
      "--ratio", "30", "--lambda", "1.4",
      "--out", str(work / "schedule.csv")])
print((work / "schedule.csv").read_text().splitlines()[0])

print("== omniprefill gen ==")
main(["gen", "--synth", str(work / "synth.json"),
      "--config", str(work / "model.json"), "--out", str(work / "stream.ots")])

print("== omniprefill prune-pre ==")
main(["prune-pre", "--input", str(work / "stream.ots"),
      "--spec", str(work / "retention.json")])

print("== omniprefill run (from the container) ==")
main(["run", "--config", str(work / "model.json"),
      "--spec", str(work / "retention.json"),
      "--input", str(work / "stream.ots"),
      "--trace", str(work / "trace.csv")])

print("== omniprefill flops ==")
main(["flops", "--trace", str(work / "trace.csv"),
      "--config", str(work / "model.json"), "--json",
      "--out", str(work / "cost.json")])
cost = json.loads((work / "cost.json").read_text())
print(f"flops ratio from the priced trace: {cost['ratio_vs_full']:.4f}")

for p in sorted(work.iterdir()):
    p.unlink()
work.rmdir()
