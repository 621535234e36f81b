import hashlib
import numpy as np
from sklearn.cluster import KMeans
from sklearn.preprocessing import StandardScaler

import constants as const
from errors import EmptyCluster, SingularGram


def gram_condition(gram):
    """
    Condition number of a symmetric positive semi-definite Gram matrix.

    Returns ``inf`` when the smallest singular value is zero, so an all-zero regressor
    is flagged rather than silently solved.
    """
    if gram.size == 0:
        return 1.0
    singular_values = np.linalg.svd(gram, compute_uv=False)
    if singular_values[-1] <= 0:
        return np.inf
    return singular_values[0] / singular_values[-1]


def solve_gram(gram, rhs, block, cond_limit=const.ALS_COND_LIMIT):
    """
    Solve the normal equations ``gram @ x = rhs``.

    Parameters
    ----------
    gram : np.ndarray
        Square Gram matrix.
    rhs : np.ndarray
        Right hand side.
    block : str
        Name of the parameter block, reported when the system is singular.
    cond_limit : float, optional
        Largest accepted condition number.

    Returns
    -------
    np.ndarray
        The least squares solution.
    """
    condition = gram_condition(gram)
    if not np.isfinite(condition) or condition > cond_limit:
        raise SingularGram(block, condition)
    return np.linalg.solve(gram, rhs)


def cluster_units_kmeans(covariates, k, seed, restarts=const.EST_CLUSTER_RESTARTS):
    """
    Partition units into ``k`` groups by k-means on standardized covariates.

    Parameters
    ----------
    covariates : np.ndarray
        n x p covariate matrix.
    k : int
        Number of clusters.
    seed : int
        Seed of the first k-means run; restart r uses ``seed + r``.
    restarts : int, optional
        Number of attempts before an empty cluster is reported.

    Returns
    -------
    np.ndarray
        Cluster label (0..k-1) for every unit.
    """
    standardized = StandardScaler().fit_transform(covariates)

    for restart in range(restarts):
        kmeans = KMeans(
            n_clusters=k, n_init=const.EST_KMEANS_N_INIT, random_state=seed + restart
        )
        labels = kmeans.fit_predict(standardized)
        if np.all(np.bincount(labels, minlength=k) > 0):
            return labels

    raise EmptyCluster(f"k-means left an empty cluster after {restarts} restarts (k={k})")


def sha256_file(path):
    """
    Hex digest of a file's contents.
    """
    digest = hashlib.sha256()
    with open(path, "rb") as file:
        for chunk in iter(lambda: file.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
