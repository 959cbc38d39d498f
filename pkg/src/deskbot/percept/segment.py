"""Instance segmentation from centroid vectors and one-shot semantic matching."""

from __future__ import annotations

import numpy as np

from .render import RenderedFrame

MERGE_RADIUS_PX = 4.0
SEMANTIC_COSINE_TAU = 0.2


def segment_instances(frame: RenderedFrame, merge_radius: float = MERGE_RADIUS_PX):
    """Group pixels whose (pixel + centroid vector) land together.

    Returns a list of boolean masks (H, W), disjoint, largest first.
    """
    valid = frame.valid
    if not valid.any():
        return []
    H, W = frame.height, frame.width
    vv, uu = np.mgrid[0:H, 0:W]
    land_u = uu[valid] + frame.instance[..., 0][valid]
    land_v = vv[valid] + frame.instance[..., 1][valid]
    pix_idx = np.nonzero(valid.ravel())[0]

    # bucket landing points on a merge_radius grid, then merge neighbor
    # buckets whose centroids agree within the radius
    cu = np.floor(land_u / merge_radius).astype(np.int64)
    cv = np.floor(land_v / merge_radius).astype(np.int64)
    buckets: dict[tuple, list] = {}
    for i in range(len(pix_idx)):
        buckets.setdefault((int(cu[i]), int(cv[i])), []).append(i)

    keys = sorted(buckets.keys())
    parent = {k: k for k in keys}

    def find(k):
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    cent = {}
    for k in keys:
        members = buckets[k]
        cent[k] = (float(np.mean(land_u[members])), float(np.mean(land_v[members])))
    for k in keys:
        for du in (-1, 0, 1):
            for dv in (-1, 0, 1):
                nb = (k[0] + du, k[1] + dv)
                if nb <= k or nb not in buckets:
                    continue
                d = np.hypot(cent[k][0] - cent[nb][0], cent[k][1] - cent[nb][1])
                if d <= merge_radius:
                    ra, rb = find(k), find(nb)
                    if ra != rb:
                        parent[max(ra, rb)] = min(ra, rb)

    clusters: dict[tuple, list] = {}
    for k in keys:
        clusters.setdefault(find(k), []).extend(buckets[k])
    masks = []
    for root in sorted(clusters.keys()):
        mask = np.zeros(H * W, dtype=bool)
        mask[pix_idx[clusters[root]]] = True
        masks.append(mask.reshape(H, W))
    masks.sort(key=lambda m: -int(m.sum()))
    return masks


def match_semantic(frame: RenderedFrame, annotation_mask: np.ndarray,
                   reference: RenderedFrame, tau: float = SEMANTIC_COSINE_TAU) -> np.ndarray:
    """One annotated example -> mask of pixels of the same semantic class.

    Cosine distance between each pixel's semantic embedding and the mean
    annotation embedding, thresholded at tau.
    """
    ann = annotation_mask & reference.valid
    if not ann.any():
        raise ValueError("annotation selects no valid pixels")
    mean = reference.semantic[ann].mean(axis=0)
    n = np.linalg.norm(mean)
    if n == 0:
        return np.zeros((frame.height, frame.width), dtype=bool)
    mean = mean / n
    emb = frame.semantic.reshape(-1, frame.semantic.shape[-1])
    norms = np.linalg.norm(emb, axis=1)
    ok = norms > 0
    cos = np.zeros(len(emb))
    cos[ok] = (emb[ok] @ mean) / norms[ok]
    mask = ok & (1.0 - cos <= tau)
    return (mask.reshape(frame.height, frame.width)) & frame.valid
