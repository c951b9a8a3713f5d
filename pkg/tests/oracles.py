"""Brute-force reference implementations that scan the raw triple list.

These deliberately avoid the graph indexes and the density index so they
stay independent of the code under test.
"""


def density(triples, num_entities, mode="both"):
    counts = [0] * num_entities
    for h, _, t in triples:
        counts[t] += 1
        if mode == "both":
            counts[h] += 1
    return counts


def _edges(triples, entity, side, undirected):
    out = [(r, t) for h, r, t in triples if h == entity]
    inc = [(r, h) for h, r, t in triples if t == entity]
    first, second = (out, inc) if side == "head" else (inc, out)
    return first + (second if undirected else [])


def entity_context(triples, num_entities, entity, n, full, side="head", undirected=False):
    """Returns a list of ("rel"|"ent", id)."""
    rho = density(triples, num_entities)
    edges = _edges(triples, entity, side, undirected)
    rels, ents = [], []
    for r, e in edges:
        if r not in rels:
            rels.append(r)
        if e not in ents:
            ents.append(e)
    if full:
        return [("rel", r) for r in rels] + [("ent", e) for e in ents]
    ranked = sorted(ents, key=lambda e: (-rho[e], e))
    chosen = ranked if n is None else ranked[:n]
    linking = []
    for e in chosen:
        for r, e2 in edges:
            if e2 == e and r not in linking:
                linking.append(r)
    return [("rel", r) for r in linking] + [("ent", e) for e in chosen]


def relation_context(triples, num_entities, relation, k, full):
    rho = density(triples, num_entities)
    pairs = []
    for h, r, t in triples:
        if r == relation and (h, t) not in pairs:
            pairs.append((h, t))
    if not full:
        pairs = sorted(pairs, key=lambda p: (-(rho[p[0]] + rho[p[1]]), p[0], p[1]))
        if k is not None:
            pairs = pairs[:k]
    return [("ent", e) for p in pairs for e in p]


def metrics(ranks, ks=(1, 3, 5, 10)):
    n = len(ranks)
    mrr = sum(1.0 / r for r in ranks) / n
    return mrr, {k: sum(1 for r in ranks if r <= k) / n for k in ks}


def batch_loss(model, tokens, mask, labels):
    import numpy as np

    probs, _ = model.forward(tokens, mask)
    return float(np.mean([-np.log(probs[i, lab]) for i, lab in enumerate(labels)]))


def finite_difference_grads(model, tokens, mask, labels, eps=1e-4):
    """Central differences of the batch-mean cross-entropy, one parameter entry at a time."""
    import numpy as np

    out = {}
    for name, p in model.params.items():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            up = batch_loss(model, tokens, mask, labels)
            p[idx] = old - eps
            down = batch_loss(model, tokens, mask, labels)
            p[idx] = old
            g[idx] = (up - down) / (2 * eps)
        out[name] = g
    return out


def max_relative_error(analytic, numeric, floor=1e-10):
    import numpy as np

    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((diff / denom).max()) if diff.size else 0.0
