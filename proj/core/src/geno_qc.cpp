#include "imml/geno_qc.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "imml/errors.hpp"

namespace imml {

void GenotypeMatrix::validate() const {
    if (values.size() != n() * m()) throw ValueError("genotypes: value count mismatch");
    for (std::int8_t v : values) {
        if (v != kMissingGenotype && (v < 0 || v > 2))
            throw ValueError("genotypes: entries must be 0, 1, 2, or missing");
    }
    std::unordered_set<std::string> seen;
    for (const std::string& s : subjects)
        if (!seen.insert(s).second) throw ValueError("genotypes: duplicate subject '" + s + "'");
    seen.clear();
    for (const std::string& s : snps)
        if (!seen.insert(s).second) throw ValueError("genotypes: duplicate snp '" + s + "'");
}

namespace {

GenotypeMatrix keep_columns(const GenotypeMatrix& g, const std::vector<bool>& keep) {
    GenotypeMatrix out;
    out.subjects = g.subjects;
    std::size_t m = g.m();
    for (std::size_t c = 0; c < m; ++c)
        if (keep[c]) out.snps.push_back(g.snps[c]);
    out.values.reserve(g.n() * out.m());
    for (std::size_t r = 0; r < g.n(); ++r)
        for (std::size_t c = 0; c < m; ++c)
            if (keep[c]) out.values.push_back(g.values[r * m + c]);
    return out;
}

}  // namespace

std::pair<GenotypeMatrix, std::vector<std::string>> filter_missingness(
    const GenotypeMatrix& g, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw ValueError("missingness filter: threshold must lie in (0, 1]");
    std::size_t n = g.n(), m = g.m();
    std::vector<bool> keep(m, true);
    std::vector<std::string> removed;
    for (std::size_t c = 0; c < m; ++c) {
        std::size_t missing = 0;
        for (std::size_t r = 0; r < n; ++r)
            if (g.values[r * m + c] == kMissingGenotype) ++missing;
        double frac = n == 0 ? 0.0 : static_cast<double>(missing) / static_cast<double>(n);
        if (frac > threshold) {
            keep[c] = false;
            removed.push_back(g.snps[c]);
        }
    }
    return {keep_columns(g, keep), removed};
}

std::pair<GenotypeMatrix, std::size_t> impute_round_mean(const GenotypeMatrix& g) {
    GenotypeMatrix out = g;
    std::size_t n = g.n(), m = g.m();
    std::size_t imputed = 0;
    for (std::size_t c = 0; c < m; ++c) {
        double sum = 0.0;
        std::size_t observed = 0;
        for (std::size_t r = 0; r < n; ++r) {
            std::int8_t v = g.values[r * m + c];
            if (v != kMissingGenotype) {
                sum += v;
                ++observed;
            }
        }
        if (observed == n) continue;
        if (observed == 0)
            throw ValueError("imputation: column '" + g.snps[c] + "' has no observed values");
        auto fill = static_cast<std::int8_t>(
            std::llround(sum / static_cast<double>(observed)));
        for (std::size_t r = 0; r < n; ++r) {
            if (out.values[r * m + c] == kMissingGenotype) {
                out.values[r * m + c] = fill;
                ++imputed;
            }
        }
    }
    return {out, imputed};
}

double maf(const std::vector<std::int8_t>& column) {
    if (column.empty()) throw ValueError("maf: empty column");
    double sum = 0.0;
    for (std::int8_t v : column) {
        if (v == kMissingGenotype) throw ValueError("maf: column has missing values");
        sum += v;
    }
    double p = sum / (2.0 * static_cast<double>(column.size()));
    return std::min(p, 1.0 - p);
}

double hwe_p_value(std::size_t n0, std::size_t n1, std::size_t n2) {
    std::size_t n = n0 + n1 + n2;
    if (n == 0) throw ValueError("hwe: all genotype counts are zero");
    double nd = static_cast<double>(n);
    double p = (2.0 * static_cast<double>(n2) + static_cast<double>(n1)) / (2.0 * nd);
    double q = 1.0 - p;
    double expected[3] = {nd * q * q, 2.0 * nd * p * q, nd * p * p};
    double observed[3] = {static_cast<double>(n0), static_cast<double>(n1),
                          static_cast<double>(n2)};
    double chi2 = 0.0;
    for (int i = 0; i < 3; ++i) {
        if (expected[i] > 0.0) {
            double d = observed[i] - expected[i];
            chi2 += d * d / expected[i];
        }
    }
    // Survival function of chi-square with 1 degree of freedom.
    return std::erfc(std::sqrt(chi2 / 2.0));
}

std::pair<GenotypeMatrix, QcReport> qc_pipeline(const GenotypeMatrix& g,
                                                QcThresholds thresholds) {
    g.validate();
    QcReport report;
    report.input_snps = g.m();
    report.thresholds = thresholds;

    auto [after_missing, dropped_missing] = filter_missingness(g, thresholds.missing);
    report.dropped_missingness = dropped_missing;
    report.removed_missingness = dropped_missing.size();

    auto [imputed, imputed_cells] = impute_round_mean(after_missing);
    report.imputed_cells = imputed_cells;

    std::size_t n = imputed.n(), m = imputed.m();
    std::vector<bool> keep(m, true);
    std::vector<std::int8_t> column(n);
    for (std::size_t c = 0; c < m; ++c) {
        for (std::size_t r = 0; r < n; ++r) column[r] = imputed.values[r * m + c];
        if (maf(column) < thresholds.maf) {
            keep[c] = false;
            report.dropped_maf.push_back(imputed.snps[c]);
        }
    }
    report.removed_maf = report.dropped_maf.size();
    GenotypeMatrix after_maf = keep_columns(imputed, keep);

    n = after_maf.n();
    m = after_maf.m();
    keep.assign(m, true);
    for (std::size_t c = 0; c < m; ++c) {
        std::size_t counts[3] = {0, 0, 0};
        for (std::size_t r = 0; r < n; ++r)
            ++counts[static_cast<std::size_t>(after_maf.values[r * m + c])];
        if (hwe_p_value(counts[0], counts[1], counts[2]) < thresholds.hwe) {
            keep[c] = false;
            report.dropped_hwe.push_back(after_maf.snps[c]);
        }
    }
    report.removed_hwe = report.dropped_hwe.size();
    GenotypeMatrix survivors = keep_columns(after_maf, keep);
    report.surviving = survivors.m();
    return {survivors, report};
}

GenotypeMatrix read_genotypes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    GenotypeMatrix g;
    {
        std::stringstream ss(line);
        std::string cell;
        bool first = true;
        while (std::getline(ss, cell, ',')) {
            if (first) {
                if (cell != "id")
                    throw ParseError(path + ": first header column must be 'id'");
                first = false;
            } else {
                g.snps.push_back(cell);
            }
        }
        if (first) throw ParseError(path + ": header must start with an id column");
    }

    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++row;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            if (col == 0) {
                g.subjects.push_back(cell);
            } else {
                if (cell == "NA") g.values.push_back(kMissingGenotype);
                else if (cell == "0") g.values.push_back(0);
                else if (cell == "1") g.values.push_back(1);
                else if (cell == "2") g.values.push_back(2);
                else
                    throw ParseError(path + ": row " + std::to_string(row) + ", column '" +
                                     (col <= g.snps.size() ? g.snps[col - 1] : "?") +
                                     "': expected 0, 1, 2, or NA, got '" + cell + "'");
            }
            ++col;
        }
        if (col != g.snps.size() + 1)
            throw ParseError(path + ": row " + std::to_string(row) + " has " +
                             std::to_string(col) + " cells, expected " +
                             std::to_string(g.snps.size() + 1));
    }
    g.validate();
    return g;
}

void write_genotypes(const GenotypeMatrix& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "id";
    for (const std::string& s : g.snps) out << ',' << s;
    out << "\n";
    for (std::size_t r = 0; r < g.n(); ++r) {
        out << g.subjects[r];
        for (std::size_t c = 0; c < g.m(); ++c) {
            std::int8_t v = g.at(r, c);
            if (v == kMissingGenotype) out << ",NA";
            else out << ',' << static_cast<int>(v);
        }
        out << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace imml
