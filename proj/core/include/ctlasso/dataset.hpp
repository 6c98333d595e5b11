#pragma once

#include "ctlasso/common.hpp"

#include <string>
#include <utility>
#include <vector>

namespace ctlasso {

// Observed sample: outcome y, binary treatment a, covariate matrix w.
// Immutable after construction; every downstream routine may share it.
struct Dataset {
    VectorXd y;
    VectorXd a;
    MatrixXd w;
    std::vector<std::string> column_names;

    int n() const { return static_cast<int>(y.size()); }
    int p() const { return static_cast<int>(w.cols()); }

    // Enforces: matching lengths, n >= 2, a in {0,1} with both arms present,
    // all entries finite. Throws DataError.
    void validate() const;
};

// Affine map of the outcome into [0,1] plus the bookkeeping needed to put
// effect estimates back on the original scale.
struct OutcomeScale {
    double y_min = 0.0;
    double y_max = 1.0;

    double range() const { return y_max - y_min; }
    double to_unit(double y) const { return (y - y_min) / range(); }
    double from_unit(double s) const { return y_min + s * range(); }
    // A difference of means transforms by the slope alone.
    double unscale_effect(double effect_unit) const { return effect_unit * range(); }
};

// Maps y into [0,1]. Outcomes already coded {0,1} pass through with the
// (0,1) scale; a constant outcome is rejected (no spread to fluctuate).
std::pair<VectorXd, OutcomeScale> scale_outcome(const VectorXd& y);

// Cross-validation folds; every fold holds at least one treated and one
// control unit so per-fold refits never see a single-arm sample.
struct FoldAssignment {
    std::vector<int> fold_id;  // length n, values in [0, v)
    int v = 0;

    std::vector<int> train_rows(int fold) const;
    std::vector<int> validation_rows(int fold) const;
};

// Deterministic in (n, v, seed, a); fold sizes balanced within +-1.
// Throws DataError when v > n or either arm has fewer than v units.
FoldAssignment make_folds(int n, int v, std::uint64_t seed, const VectorXd& a);

// CSV loader: header row names the columns; outcome/treatment picked by
// name; every remaining column becomes a covariate in file order.
Dataset load_dataset(const std::string& path, const std::string& outcome_col,
                     const std::string& treatment_col);
Dataset parse_dataset(const std::string& csv_text, const std::string& outcome_col,
                      const std::string& treatment_col);

// Inverse of load_dataset up to float formatting (round-trips exactly).
std::string dataset_to_csv(const Dataset& data, const std::string& outcome_col,
                           const std::string& treatment_col);
void save_dataset(const Dataset& data, const std::string& path,
                  const std::string& outcome_col = "y",
                  const std::string& treatment_col = "a");

}  // namespace ctlasso
