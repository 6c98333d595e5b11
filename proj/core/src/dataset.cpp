#include "ctlasso/dataset.hpp"

#include "ctlasso/csv.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

namespace ctlasso {

void Dataset::validate() const {
    const int nn = n();
    if (nn < 2) throw DataError("dataset: need at least 2 rows, got " + std::to_string(nn));
    if (a.size() != nn) throw DataError("dataset: outcome/treatment length mismatch");
    if (w.rows() != nn) throw DataError("dataset: covariate row count mismatch");
    if (static_cast<int>(column_names.size()) != p()) {
        throw DataError("dataset: covariate name count mismatch");
    }
    int n_treated = 0;
    for (int i = 0; i < nn; ++i) {
        if (!std::isfinite(y[i])) {
            throw DataError("dataset: non-finite value at row " + std::to_string(i) + ", outcome");
        }
        if (a[i] != 0.0 && a[i] != 1.0) {
            throw DataError("dataset: non-binary treatment at row " + std::to_string(i));
        }
        n_treated += a[i] == 1.0 ? 1 : 0;
    }
    for (int j = 0; j < p(); ++j) {
        for (int i = 0; i < nn; ++i) {
            if (!std::isfinite(w(i, j))) {
                throw DataError("dataset: non-finite value at row " + std::to_string(i) +
                                ", col '" + column_names[static_cast<std::size_t>(j)] + "'");
            }
        }
    }
    if (n_treated == 0) throw DataError("dataset: all-control sample (no treated units)");
    if (n_treated == nn) throw DataError("dataset: all-treated sample (no control units)");
}

std::pair<VectorXd, OutcomeScale> scale_outcome(const VectorXd& y) {
    const Eigen::Index n = y.size();
    if (n == 0) throw DataError("scale_outcome: empty outcome vector");
    bool binary = true;
    double lo = y[0], hi = y[0];
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!std::isfinite(y[i])) throw DataError("scale_outcome: non-finite outcome");
        lo = std::min(lo, y[i]);
        hi = std::max(hi, y[i]);
        if (y[i] != 0.0 && y[i] != 1.0) binary = false;
    }
    if (binary) {
        return {y, OutcomeScale{0.0, 1.0}};
    }
    if (hi <= lo) throw DataError("scale_outcome: constant outcome (fluctuation undefined)");
    OutcomeScale scale{lo, hi};
    VectorXd s(n);
    for (Eigen::Index i = 0; i < n; ++i) s[i] = scale.to_unit(y[i]);
    return {s, scale};
}

std::vector<int> FoldAssignment::train_rows(int fold) const {
    std::vector<int> rows;
    rows.reserve(fold_id.size());
    for (std::size_t i = 0; i < fold_id.size(); ++i) {
        if (fold_id[i] != fold) rows.push_back(static_cast<int>(i));
    }
    return rows;
}

std::vector<int> FoldAssignment::validation_rows(int fold) const {
    std::vector<int> rows;
    for (std::size_t i = 0; i < fold_id.size(); ++i) {
        if (fold_id[i] == fold) rows.push_back(static_cast<int>(i));
    }
    return rows;
}

FoldAssignment make_folds(int n, int v, std::uint64_t seed, const VectorXd& a) {
    if (v < 2) throw DataError("make_folds: need at least 2 folds");
    if (v > n) throw DataError("make_folds: more folds than rows (v=" + std::to_string(v) +
                               ", n=" + std::to_string(n) + ")");
    if (a.size() != n) throw DataError("make_folds: treatment length mismatch");
    std::vector<int> treated, control;
    for (int i = 0; i < n; ++i) (a[i] == 1.0 ? treated : control).push_back(i);
    if (static_cast<int>(treated.size()) < v || static_cast<int>(control.size()) < v) {
        throw DataError("make_folds: cannot place both arms in every fold (treated=" +
                        std::to_string(treated.size()) + ", control=" +
                        std::to_string(control.size()) + ", v=" + std::to_string(v) + ")");
    }
    // Deal each arm round-robin over a seeded permutation; the control deal
    // continues the fold cycle so overall sizes stay within +-1.
    Rng rng(Rng::derive_seed(seed, 0x666f6c64 /* "fold" */));
    rng.shuffle(treated);
    rng.shuffle(control);
    FoldAssignment folds;
    folds.v = v;
    folds.fold_id.assign(static_cast<std::size_t>(n), 0);
    int cycle = 0;
    for (int i : treated) folds.fold_id[static_cast<std::size_t>(i)] = cycle++ % v;
    for (int i : control) folds.fold_id[static_cast<std::size_t>(i)] = cycle++ % v;
    return folds;
}

namespace {

double parse_number(const std::string& s, int row, const std::string& col) {
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    // Trailing spaces are tolerated, any other residue is not.
    while (end && *end == ' ') ++end;
    if (end == begin || (end && *end != '\0')) {
        throw DataError("dataset: non-numeric cell at row " + std::to_string(row) +
                        ", col '" + col + "': '" + s + "'");
    }
    if (!std::isfinite(v)) {
        throw DataError("dataset: non-finite value at row " + std::to_string(row) +
                        ", col '" + col + "'");
    }
    return v;
}

Dataset dataset_from_table(const CsvTable& t, const std::string& outcome_col,
                           const std::string& treatment_col) {
    const int yj = t.column(outcome_col);
    if (yj < 0) throw DataError("dataset: missing column '" + outcome_col + "'");
    const int aj = t.column(treatment_col);
    if (aj < 0) throw DataError("dataset: missing column '" + treatment_col + "'");
    if (yj == aj) throw DataError("dataset: outcome and treatment name the same column");

    Dataset d;
    const int n = static_cast<int>(t.rows.size());
    const int ncol = static_cast<int>(t.header.size());
    d.y.resize(n);
    d.a.resize(n);
    std::vector<int> wcols;
    for (int j = 0; j < ncol; ++j) {
        if (j != yj && j != aj) {
            wcols.push_back(j);
            d.column_names.push_back(t.header[static_cast<std::size_t>(j)]);
        }
    }
    d.w.resize(n, static_cast<Eigen::Index>(wcols.size()));
    for (int i = 0; i < n; ++i) {
        const auto& row = t.rows[static_cast<std::size_t>(i)];
        d.y[i] = parse_number(row[static_cast<std::size_t>(yj)], i, outcome_col);
        const double av = parse_number(row[static_cast<std::size_t>(aj)], i, treatment_col);
        if (av != 0.0 && av != 1.0) {
            throw DataError("dataset: non-binary treatment at row " + std::to_string(i) +
                            ": '" + row[static_cast<std::size_t>(aj)] + "'");
        }
        d.a[i] = av;
        for (std::size_t k = 0; k < wcols.size(); ++k) {
            d.w(i, static_cast<Eigen::Index>(k)) =
                parse_number(row[static_cast<std::size_t>(wcols[k])], i, d.column_names[k]);
        }
    }
    d.validate();
    return d;
}

}  // namespace

Dataset parse_dataset(const std::string& csv_text, const std::string& outcome_col,
                      const std::string& treatment_col) {
    return dataset_from_table(parse_csv(csv_text), outcome_col, treatment_col);
}

Dataset load_dataset(const std::string& path, const std::string& outcome_col,
                     const std::string& treatment_col) {
    return dataset_from_table(read_csv(path), outcome_col, treatment_col);
}

std::string dataset_to_csv(const Dataset& data, const std::string& outcome_col,
                           const std::string& treatment_col) {
    std::ostringstream out;
    out << csv_escape(outcome_col) << ',' << csv_escape(treatment_col);
    for (const auto& name : data.column_names) out << ',' << csv_escape(name);
    out << '\n';
    for (int i = 0; i < data.n(); ++i) {
        out << format_double(data.y[i]) << ',' << format_double(data.a[i]);
        for (int j = 0; j < data.p(); ++j) out << ',' << format_double(data.w(i, j));
        out << '\n';
    }
    return out.str();
}

void save_dataset(const Dataset& data, const std::string& path,
                  const std::string& outcome_col, const std::string& treatment_col) {
    write_text_file(path, dataset_to_csv(data, outcome_col, treatment_col));
}

}  // namespace ctlasso
