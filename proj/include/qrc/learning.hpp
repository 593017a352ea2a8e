#pragma once

// Linear readout training and evaluation metrics. Feature matrices carry the
// bias column at index 0 unless `has_bias` is false; that column is never
// standardized or penalized.

#include "qrc/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace qrc {

struct StandardizationStats {
    RVector mean;
    RVector stddev;
    bool has_bias = true;
};

/// Population statistics per column. Constant columns get std 1 so that they
/// map to zero.
StandardizationStats zscore_fit(const RMatrix& x, bool has_bias = true);
RMatrix zscore_apply(const RMatrix& x, const StandardizationStats& stats);

/// argmin ||y - X w||^2 + lambda sum_{j != bias} w_j^2 via LDLT of the normal
/// equations. Throws NumericalError when the system is singular.
RVector ridge_fit(const RMatrix& x, const RVector& y, double lambda, bool has_bias = true);
/// One column of weights per target column.
RMatrix ridge_fit(const RMatrix& x, const RMatrix& y, double lambda, bool has_bias = true);

double ridge_objective(const RMatrix& x, const RVector& y, const RVector& w, double lambda, bool has_bias = true);

enum class FoldMode { contiguous, shuffled };

struct CrossValidation {
    std::vector<double> grid;     ///< ascending
    /// mse(g, t): mean validation MSE of grid point g for target t.
    RMatrix mse;
    std::vector<double> best;     ///< selected lambda per target
};

/// 13 log-spaced points from 1e-8 to 1e4.
std::vector<double> default_lambda_grid();

/// Row indices of each validation fold, ascending.
std::vector<std::vector<Eigen::Index>> fold_rows(Eigen::Index rows, int folds, FoldMode mode, std::uint64_t seed);

/// k-fold validation for every grid value and every target column. Each fold
/// is solved once through an eigendecomposition of the centered training
/// block, which is exact for an unpenalized bias. Ties go to the larger lambda.
CrossValidation cross_validate(const RMatrix& x, const RMatrix& y, std::vector<double> grid, int folds = 10,
                               FoldMode mode = FoldMode::contiguous, std::uint64_t seed = 0, bool has_bias = true);

double cross_validate_lambda(const RMatrix& x, const RVector& y, std::vector<double> grid, int folds = 10,
                             FoldMode mode = FoldMode::contiguous, std::uint64_t seed = 0, bool has_bias = true);

struct FitOptions {
    std::vector<double> lambda_grid = default_lambda_grid();
    int folds = 10;
    FoldMode fold_mode = FoldMode::contiguous;
    std::uint64_t seed = 0;
    bool has_bias = true;
    bool standardize = true;
    /// When set, skips cross validation.
    double fixed_lambda = -1.0;
};

/// Affine readout, one weight column per task.
struct LinearReadout {
    StandardizationStats stats;
    bool standardized = true;
    RMatrix weights;              ///< features x tasks
    std::vector<double> lambda;   ///< per task

    Eigen::Index feature_count() const { return weights.rows(); }
    Eigen::Index task_count() const { return weights.cols(); }

    RMatrix predict(const RMatrix& x) const;

    std::string to_json() const;
    static LinearReadout from_json(const std::string& text);
    void save(const std::string& path) const;
    static LinearReadout load(const std::string& path);
};

LinearReadout fit_readout(const RMatrix& x, const RMatrix& y, const FitOptions& options = {});
RVector predict(const RMatrix& x, const LinearReadout& readout);

double r_squared(const RVector& y, const RVector& yhat);
double nmse(const RVector& y, const RVector& yhat);

/// cov^2(y, yhat) / (var(y) var(yhat)), population convention; 0 when yhat is constant.
double stm_capacity(const RVector& y, const RVector& yhat);
double stm_total(const std::vector<double>& capacities);

} // namespace qrc
