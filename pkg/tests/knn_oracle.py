"""Independent brute-force KNN oracle used to verify the localizer.

Implements the documented decision contract with plain Python loops and
explicit sorting, sharing no code with the implementation under test:

* neighbor order: ascending distance, then rp_id, then entry position;
* vote rule: majority RP; ties -> smallest mean neighbor distance;
  remaining ties -> lowest rp_id; coordinates of the winning RP;
* centroid rule: inverse-distance-weighted (1 / (d + 1e-9)) mean of the
  k neighbor coordinates; reported rp_id still follows the vote.
"""

import numpy as np


def oracle_decide(dists, rp_ids, xs, ys, k, rule="vote"):
    entries = sorted(range(len(dists)), key=lambda i: (dists[i], rp_ids[i], i))
    top = entries[:k]
    nb = [(int(rp_ids[i]), float(dists[i]), float(xs[i]), float(ys[i])) for i in top]

    counts = {}
    for rp, _, _, _ in nb:
        counts[rp] = counts.get(rp, 0) + 1
    best = max(counts.values())
    tied = [rp for rp, c in counts.items() if c == best]
    if len(tied) > 1:
        means = {}
        for rp in tied:
            ds = [d for r, d, _, _ in nb if r == rp]
            means[rp] = sum(ds) / len(ds)
        lowest = min(means.values())
        tied = [rp for rp in tied if means[rp] == lowest]
    winner = min(tied)

    if rule == "vote":
        for rp, _, x, y in nb:
            if rp == winner:
                return x, y, winner, nb
        raise AssertionError("winner not among neighbors")
    weights = [1.0 / (d + 1e-9) for _, d, _, _ in nb]
    tot = sum(weights)
    x = sum(w * e[2] for w, e in zip(weights, nb)) / tot
    y = sum(w * e[3] for w, e in zip(weights, nb)) / tot
    return x, y, winner, nb


def oracle_embedding_predict(index, query_embedding, k, rule="vote"):
    """Exhaustive scan over an EmbeddingIndex."""
    q = np.asarray(query_embedding, dtype=np.float64)
    dists = []
    for i in range(len(index)):
        e = index.embeddings[i].astype(np.float64)
        dists.append(float(np.sqrt(((e - q) ** 2).sum())))
    return oracle_decide(dists, list(index.rp_ids),
                         list(index.xs), list(index.ys), k, rule)


def oracle_baseline_predict(train_set, scan, k, rule="vote"):
    """Exhaustive scan over normalized raw-RSSI vectors."""
    q = np.clip((np.asarray(scan.rssi, dtype=np.float64) + 100.0) / 100.0, 0.0, 1.0)
    coords = {rp.rp_id: (rp.x, rp.y) for rp in train_set.floorplan.rps}
    dists, rps, xs, ys = [], [], [], []
    for fp in train_set.fingerprints:
        v = np.clip((fp.rssi + 100.0) / 100.0, 0.0, 1.0)
        dists.append(float(np.sqrt(((v - q) ** 2).sum())))
        rps.append(fp.rp_id)
        xs.append(coords[fp.rp_id][0])
        ys.append(coords[fp.rp_id][1])
    return oracle_decide(dists, rps, xs, ys, k, rule)
