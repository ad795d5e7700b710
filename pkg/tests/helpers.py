"""Shared numerical test utilities."""

import numpy as np

from stmmc.graph import CorruptionPlan, community_matrix, knn_graph, normalize_adjacency
from stmmc.mpga import ModelInputs, MpgaModel


def central_difference(f, arr, h=1e-5):
    """Central finite differences of scalar f() w.r.t. every entry of arr."""
    grad = np.zeros_like(arr)
    flat = arr.ravel()
    g = grad.ravel()
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + h
        up = f()
        flat[idx] = orig - h
        down = f()
        flat[idx] = orig
        g[idx] = (up - down) / (2 * h)
    return grad


def build_model_instance(
    seed=0,
    n=6,
    m_keep=5,
    d_image=4,
    hidden=(4, 3),
    k=2,
    randomize_logits=True,
):
    """A small seeded model + inputs for oracle and gradient tests."""
    rng = np.random.default_rng(seed)
    proximity = normalize_adjacency(knn_graph(rng.random((n, 2)), k, "proximity"))
    similarity = normalize_adjacency(knn_graph(rng.random((n, 3)), k, "similarity"))
    x_gene = rng.uniform(-1.0, 1.0, size=(n, m_keep))
    x_image = rng.uniform(-1.0, 1.0, size=(n, d_image))
    model = MpgaModel.create(m_keep, d_image, list(hidden), rng)
    if randomize_logits:
        model.fusion_logits.value = rng.uniform(-0.5, 0.5, size=(1, len(hidden)))
        for layer in model.gene_layers + model.image_layers:
            layer.b.value = rng.uniform(-0.2, 0.2, size=layer.b.value.shape)
        model.decoder_b.value = rng.uniform(-0.2, 0.2, size=model.decoder_b.value.shape)
    inputs = ModelInputs(
        x_gene=x_gene,
        x_image=x_image,
        a_gene=proximity.normalized_adjacency,
        a_image=similarity.normalized_adjacency,
        c_gene=community_matrix(proximity),
        c_image=community_matrix(similarity),
    )
    plan = CorruptionPlan.from_seed(seed + 1000, n)
    return model, inputs, plan
