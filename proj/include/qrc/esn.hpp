#pragma once

// Echo state network baseline.

#include "qrc/types.hpp"

#include <Eigen/SparseCore>

#include <cstdint>

namespace qrc {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct EsnParams {
    int nodes = 500;
    double connectivity = 0.025;
    double spectral_radius = 0.99;
    int input_dim = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EsnMatrices {
    RMatrix w_in;        ///< nodes x (1 + input_dim), entries +-1
    SparseMatrix w;      ///< nodes x nodes
};

enum class EigenMethod { automatic, dense, arnoldi };

/// Largest |eigenvalue|. `automatic` uses a dense solve up to 1500 nodes and
/// implicitly restarted Arnoldi beyond.
double spectral_radius(const SparseMatrix& w, EigenMethod method = EigenMethod::automatic);

/// Exactly ceil(k M^2) standard-normal recurrent entries at uniformly drawn
/// positions, scaled to the requested spectral radius. Redraws when the
/// unscaled radius is zero.
EsnMatrices esn_init(const EsnParams& params);

/// x_k = tanh(W_in [1; s_k] + W x_{k-1}) from `initial` (zero when empty).
/// Rows are [1, x_k] for k >= washout.
RMatrix esn_run(const RMatrix& inputs, const EsnMatrices& m, int washout = 0, const RVector& initial = {});

/// Final state after driving with `inputs` from `initial`.
RVector esn_final_state(const RMatrix& inputs, const EsnMatrices& m, const RVector& initial);

} // namespace qrc
