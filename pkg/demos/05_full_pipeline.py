"""
The full pipeline: manifest in, morphs and result manifest out
==============================================================

Production runs are driven by a CSV manifest: one row per morph job.
Each job validates portrait geometry, crops to the 431x513 raster,
pre-aligns on landmarks, optionally runs pixel-wise alignment, blends,
composites, and encodes -- here with a 15-20 kB JPEG size target, the
footprint of a passport-chip photo. Failures stay in their row; the
batch always completes.

The same run works from the shell:

    morphalign batch --manifest jobs.csv --parallel 2
    morphalign single --image-a a.png --image-b b.png --lm-a a.txt \
        --lm-b b.txt --alpha 0.5 --method pw --out morph.jpg \
        --jpeg-target 15:20
"""

import csv
import os

from morphalign import AlignParams, read_manifest, run_batch, save_image, write_manifest
from morphalign.synthbench import make_portrait

out_dir = os.path.join(os.path.dirname(__file__), "output", "05_full_pipeline")
os.makedirs(out_dir, exist_ok=True)

# Four synthetic sitters, saved as ordinary PNG + landmark text files.
subjects = {}
for seed in (1, 2, 3, 4):
    img, lm = make_portrait(seed=seed)
    img_path = os.path.join(out_dir, f"subject{seed}.png")
    lm_path = os.path.join(out_dir, f"subject{seed}.txt")
    save_image(img, img_path)
    with open(lm_path, "w") as f:
        for x, y in lm:
            f.write(f"{x} {y}\n")
    subjects[seed] = (img_path, lm_path)

# The job manifest. One bad row (missing landmark file) shows isolation.
manifest_path = os.path.join(out_dir, "jobs.csv")
pairs = [("m1", 1, 2, "pw"), ("m2", 3, 4, "pw"), ("m3", 2, 3, "simple")]
with open(manifest_path, "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["job_id", "image_a", "image_b", "landmarks_a", "landmarks_b",
                "method", "alpha", "output"])
    for job_id, a, b, method in pairs:
        w.writerow([job_id, subjects[a][0], subjects[b][0], subjects[a][1],
                    subjects[b][1], method, "0.5", os.path.join(out_dir, f"{job_id}.jpg")])
    w.writerow(["broken", subjects[1][0], subjects[2][0], subjects[1][1],
                os.path.join(out_dir, "missing.txt"), "simple", "0.5",
                os.path.join(out_dir, "broken.jpg")])

# Trimmed alignment settings keep this demo snappy; defaults are tuned
# for quality, not walltime, at full raster size.
params = AlignParams(gn_max_iters=2, minres_max_iters=50, minres_tol=1e-4)
jobs = read_manifest(manifest_path, align_params=params, jpeg_target=(15, 20))
rows = run_batch(jobs, parallelism=2)

results_path = os.path.join(out_dir, "jobs_results.csv")
write_manifest(rows, results_path)

for row in rows:
    if row.ok:
        extra = (f", {row.iterations} iterations, energy "
                 f"{row.initial_energy:.3e} -> {row.final_energy:.3e}"
                 if row.method == "pw" else "")
        print(f"{row.job_id}: ok, {row.output_bytes} bytes{extra}")
    else:
        print(f"{row.job_id}: {row.status}")
print(f"wrote {results_path}")
