#include "ctlasso/hdps.hpp"

#include "ctlasso/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace ctlasso {

namespace {

struct CodeKey {
    std::string source;
    std::string code;
    bool operator<(const CodeKey& o) const {
        if (source != o.source) return source < o.source;
        return code < o.code;
    }
};

}  // namespace

std::vector<std::string> ClaimsTable::sources() const {
    std::set<std::string> s;
    for (const Rec& r : records) s.insert(r.source);
    return std::vector<std::string>(s.begin(), s.end());
}

ClaimsTable parse_claims_csv(const std::string& text) {
    const CsvTable table = parse_csv(text);
    const int ci_patient = table.column("patient_id");
    const int ci_source = table.column("source");
    const int ci_code = table.column("code");
    const int ci_count = table.column("count");
    if (ci_patient < 0 || ci_source < 0 || ci_code < 0 || ci_count < 0)
        throw DataError("claims file needs columns patient_id, source, code, count");

    std::map<std::pair<CodeKey, std::string>, double> agg;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::vector<std::string>& row = table.rows[r];
        char* end = nullptr;
        const std::string& raw = row[ci_count];
        const double count = std::strtod(raw.c_str(), &end);
        if (end != raw.c_str() + raw.size() || raw.empty() || !std::isfinite(count)) {
            std::ostringstream os;
            os << "claims row " << r << ": count '" << raw << "' is not a number";
            throw DataError(os.str());
        }
        if (count < 0.0) {
            std::ostringstream os;
            os << "claims row " << r << ": negative count";
            throw DataError(os.str());
        }
        agg[{CodeKey{row[ci_source], row[ci_code]}, row[ci_patient]}] += count;
    }
    ClaimsTable out;
    out.records.reserve(agg.size());
    for (const auto& kv : agg)
        out.records.push_back({kv.first.second, kv.first.first.source, kv.first.first.code,
                               kv.second});
    return out;
}

ClaimsTable load_claims(const std::string& path) { return parse_claims_csv(read_text_file(path)); }

double interp_quantile(std::vector<double> values, double p) {
    if (values.empty()) throw DataError("quantile of an empty set");
    if (p < 0.0 || p > 1.0) throw ConfigError("quantile probability outside [0, 1]");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<std::pair<std::string, std::string>> prevalence_screen(
    const ClaimsTable& claims, const std::vector<std::string>& cohort, int k1) {
    if (cohort.empty()) throw DataError("empty cohort");
    if (k1 < 1) throw ConfigError("k1 must be at least 1");
    std::unordered_map<std::string, int> in_cohort;
    for (std::size_t i = 0; i < cohort.size(); ++i) in_cohort.emplace(cohort[i], 1);

    std::map<CodeKey, int> positive;
    for (const ClaimsTable::Rec& r : claims.records) {
        if (r.count > 0.0 && in_cohort.count(r.patient)) ++positive[CodeKey{r.source, r.code}];
    }

    struct Scored {
        std::string code;
        double score;
    };
    std::map<std::string, std::vector<Scored>> by_source;
    const double n = static_cast<double>(cohort.size());
    for (const auto& kv : positive) {
        const double p = kv.second / n;
        if (p <= 0.0 || p >= 1.0) continue;  // constant indicators carry nothing
        by_source[kv.first.source].push_back({kv.first.code, std::max(p, 1.0 - p)});
    }

    std::vector<std::pair<std::string, std::string>> selected;
    for (auto& kv : by_source) {
        std::vector<Scored>& v = kv.second;
        std::sort(v.begin(), v.end(), [](const Scored& x, const Scored& y) {
            if (x.score != y.score) return x.score > y.score;
            return x.code < y.code;
        });
        const std::size_t keep = std::min<std::size_t>(v.size(), static_cast<std::size_t>(k1));
        for (std::size_t i = 0; i < keep; ++i) selected.emplace_back(kv.first, v[i].code);
    }
    return selected;
}

std::vector<HdpsCovariate> expand_indicators(
    const ClaimsTable& claims,
    const std::vector<std::pair<std::string, std::string>>& selected,
    const std::vector<std::string>& cohort) {
    const int n = static_cast<int>(cohort.size());
    std::unordered_map<std::string, int> row_of;
    for (int i = 0; i < n; ++i) {
        if (!row_of.emplace(cohort[i], i).second) throw DataError("duplicate cohort patient id");
    }

    // Count vector per selected code over the cohort, zeros where absent.
    std::map<CodeKey, VectorXd> counts;
    for (const auto& sc : selected) counts.emplace(CodeKey{sc.first, sc.second}, VectorXd::Zero(n));
    for (const ClaimsTable::Rec& r : claims.records) {
        auto it = counts.find(CodeKey{r.source, r.code});
        if (it == counts.end()) continue;
        auto rit = row_of.find(r.patient);
        if (rit == row_of.end()) continue;
        it->second[rit->second] += r.count;
    }

    std::vector<HdpsCovariate> out;
    out.reserve(selected.size() * 3);
    std::unordered_map<std::string, int> seen;  // bit-pattern -> first index
    for (const auto& sc : selected) {
        const VectorXd& c = counts.at(CodeKey{sc.first, sc.second});
        std::vector<double> vals(c.data(), c.data() + n);
        const double med = interp_quantile(vals, 0.5);
        const double q75 = interp_quantile(vals, 0.75);
        const double cuts[3] = {0.0, med, q75};
        static const char* kinds[3] = {"nonzero", "above_median", "above_q75"};
        for (int k = 0; k < 3; ++k) {
            HdpsCovariate cov;
            cov.source = sc.first;
            cov.code = sc.second;
            cov.kind = kinds[k];
            cov.values.resize(n);
            std::string bits(static_cast<std::size_t>(n), '0');
            int ones = 0;
            for (int i = 0; i < n; ++i) {
                const bool hit = c[i] > cuts[k];
                cov.values[i] = hit ? 1.0 : 0.0;
                if (hit) {
                    bits[static_cast<std::size_t>(i)] = '1';
                    ++ones;
                }
            }
            cov.flagged_constant = (ones == 0 || ones == n);
            auto ins = seen.emplace(bits, static_cast<int>(out.size()));
            cov.flagged_duplicate = !ins.second;
            out.push_back(std::move(cov));
        }
    }
    return out;
}

std::vector<HdpsCovariate> bross_rank(std::vector<HdpsCovariate> candidates,
                                      const VectorXd& a, const VectorXd& y, int k2,
                                      bool* outcome_dichotomized) {
    if (k2 < 0) throw ConfigError("k2 must be non-negative");
    const int n = static_cast<int>(a.size());
    for (const HdpsCovariate& c : candidates)
        if (c.values.size() != n) throw DataError("indicator length does not match the cohort");

    bool binary = true;
    for (int i = 0; i < n; ++i)
        if (y[i] != 0.0 && y[i] != 1.0) binary = false;
    VectorXd yb = y;
    if (!binary) {
        std::vector<double> vals(y.data(), y.data() + n);
        const double med = interp_quantile(vals, 0.5);
        for (int i = 0; i < n; ++i) yb[i] = y[i] > med ? 1.0 : 0.0;
    }
    if (outcome_dichotomized) *outcome_dichotomized = !binary;

    int n1 = 0;
    for (int i = 0; i < n; ++i)
        if (a[i] > 0.5) ++n1;
    const int n0 = n - n1;
    if (n1 == 0 || n0 == 0) throw DataError("confounding ranking needs both treatment arms");

    for (HdpsCovariate& c : candidates) {
        int c1 = 0, c1y = 0, c0 = 0, c0y = 0, c1a = 0;
        for (int i = 0; i < n; ++i) {
            if (c.values[i] > 0.5) {
                ++c1;
                if (yb[i] > 0.5) ++c1y;
                if (a[i] > 0.5) ++c1a;
            } else {
                ++c0;
                if (yb[i] > 0.5) ++c0y;
            }
        }
        bool undefined = (c1 == 0 || c0 == 0 || c0y == 0);
        double bias = 1.0;
        if (!undefined) {
            const double rr = (static_cast<double>(c1y) / c1) / (static_cast<double>(c0y) / c0);
            const double p1 = static_cast<double>(c1a) / n1;
            const double p0 = static_cast<double>(c1 - c1a) / n0;
            const double num = p1 * (rr - 1.0) + 1.0;
            const double den = p0 * (rr - 1.0) + 1.0;
            if (num <= 1e-12 || den <= 1e-12) {
                undefined = true;
            } else {
                bias = num / den;
            }
        }
        c.bross_bias = bias;
        c.flagged_rr_undefined = undefined;
    }

    std::vector<int> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[static_cast<int>(i)] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int x, int yi) {
        const double lx = std::abs(std::log(candidates[x].bross_bias));
        const double ly = std::abs(std::log(candidates[yi].bross_bias));
        if (lx != ly) return lx > ly;
        return x < yi;  // candidate (source, code, kind) order
    });

    const std::size_t keep = std::min<std::size_t>(order.size(), static_cast<std::size_t>(k2));
    std::vector<HdpsCovariate> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
        HdpsCovariate c = candidates[order[i]];
        c.rank = static_cast<int>(i) + 1;
        out.push_back(std::move(c));
    }
    return out;
}

HdpsResult hdps_pipeline(const ClaimsTable& claims, const Dataset& baseline,
                         const std::vector<std::string>& baseline_ids,
                         const HdpsConfig& cfg) {
    if (static_cast<int>(baseline_ids.size()) != baseline.n())
        throw DataError("baseline id column length does not match the dataset");
    if (cfg.k1 < 1) throw ConfigError("k1 must be at least 1");
    if (cfg.k2 < 0) throw ConfigError("k2 must be non-negative");

    std::set<std::string> known(baseline_ids.begin(), baseline_ids.end());
    if (known.size() != baseline_ids.size()) throw DataError("duplicate baseline patient id");
    std::set<std::string> orphans;
    for (const ClaimsTable::Rec& r : claims.records)
        if (!known.count(r.patient)) orphans.insert(r.patient);
    if (!orphans.empty()) {
        std::ostringstream os;
        os << "claims reference " << orphans.size() << " patient(s) missing from the baseline:";
        int shown = 0;
        for (const std::string& p : orphans) {
            if (shown == 5) {
                os << " ...";
                break;
            }
            os << ' ' << p;
            ++shown;
        }
        throw DataError(os.str());
    }

    HdpsResult out;
    out.outcome_dichotomized = false;

    const auto selected_codes = prevalence_screen(claims, baseline_ids, cfg.k1);
    std::vector<HdpsCovariate> candidates =
        expand_indicators(claims, selected_codes, baseline_ids);
    out.n_candidates = static_cast<int>(candidates.size());

    if (cfg.k2 > out.n_candidates) {
        std::ostringstream os;
        os << "requested k2=" << cfg.k2 << " but only " << out.n_candidates
           << " candidate indicators exist; appending all";
        out.warnings.push_back(os.str());
    }
    out.selected = bross_rank(std::move(candidates), baseline.a, baseline.y, cfg.k2,
                              &out.outcome_dichotomized);
    if (out.outcome_dichotomized)
        out.warnings.push_back(
            "continuous outcome dichotomized at its median for the risk-ratio ranking");

    Dataset aug;
    aug.y = baseline.y;
    aug.a = baseline.a;
    const int p0 = baseline.p();
    const int extra = static_cast<int>(out.selected.size());
    aug.w.resize(baseline.n(), p0 + extra);
    if (p0 > 0) aug.w.leftCols(p0) = baseline.w;
    aug.column_names = baseline.column_names;
    for (int j = 0; j < extra; ++j) {
        aug.w.col(p0 + j) = out.selected[j].values;
        aug.column_names.push_back("hdps_" + out.selected[j].source + "_" +
                                   out.selected[j].code + "_" + out.selected[j].kind);
    }
    aug.validate();
    out.augmented = std::move(aug);
    return out;
}

}  // namespace ctlasso
