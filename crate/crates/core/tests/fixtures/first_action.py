"""Reference external learner: predicts the first design action for every test item."""
import csv
import json
import os
import sys

manifest_path, features_path, results_path = sys.argv[1:4]
with open(manifest_path) as f:
    manifest = json.load(f)
with open(features_path, newline="") as f:
    rows = csv.reader(f)
    header = next(rows)
    ids = {row[0] for row in rows}
assert header[0] == "id", header
missing = [t["id"] for t in manifest["test"] if t["id"] not in ids]
assert not missing, missing[:5]

offset = int(os.environ.get("SEED_OFFSET", "0"))
first = manifest["design"]["actions"][0]
results = {
    "trial_seed": manifest["design"]["seed"] + offset,
    "predictions": [{"id": t["id"], "action": first} for t in manifest["test"]],
}
with open(results_path, "w") as f:
    json.dump(results, f)
