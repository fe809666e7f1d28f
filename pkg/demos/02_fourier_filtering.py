"""
Fourier transform and filtering of a distribution-valued signal
===============================================================

The graph Fourier transform of a Gaussian signal is its pushforward under the
transposed eigenbasis of the Laplacian. Chebyshev filters act diagonally in
that basis, on the mean and on both sides of the covariance.
"""

import numpy as np

from gdsp import ChebFilter, GaussianMeasure, Graph, build_laplacian, gds_filter, gds_ft, gds_ift
from gdsp.transforms import spectral_response

# a path on five nodes
a = np.zeros((5, 5))
for i in range(4):
    a[i, i + 1] = a[i + 1, i] = 1.0
sd = build_laplacian(Graph(a))
print("Laplacian spectrum", np.round(sd.eigvals, 4))

# a smooth mean with independent unit noise on every node
mu = GaussianMeasure(np.linspace(0.0, 1.0, 5), np.eye(5))
hat = gds_ft(mu, sd)
print("spectral mean     ", np.round(hat.mean, 4))
# white noise stays white under any orthonormal change of basis
print("spectral cov is I ", np.allclose(hat.cov, np.eye(5)))

# a low-pass filter damps high frequencies of both the mean and the noise
low = ChebFilter((0.5, -0.5, 0.0))
print("frequency response", np.round(spectral_response(sd, low), 4))
out = gds_filter(mu, sd, low)
print("filtered variances", np.round(np.diag(out.cov), 4))

# and the inverse transform undoes the forward one
back = gds_ift(hat, sd)
print("round trip error  ", np.abs(back.cov - mu.cov).max())
