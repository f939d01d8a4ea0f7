#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace imml {

// Additive minor-allele dosage coding; -1 marks a missing call.
constexpr std::int8_t kMissingGenotype = -1;

struct GenotypeMatrix {
    std::vector<std::string> subjects;   // n
    std::vector<std::string> snps;       // m
    std::vector<std::int8_t> values;     // n * m row-major, entries {0,1,2,-1}

    std::size_t n() const { return subjects.size(); }
    std::size_t m() const { return snps.size(); }
    std::int8_t at(std::size_t r, std::size_t c) const { return values[r * m() + c]; }

    void validate() const;  // throws ValueError on bad entries or duplicate ids
};

struct QcThresholds {
    double missing = 0.95;  // drop when missing fraction strictly exceeds this
    double maf = 0.05;      // drop when MAF is strictly below this
    double hwe = 1e-6;      // drop when the equilibrium p-value is strictly below
};

struct QcReport {
    std::size_t input_snps = 0;
    std::size_t removed_missingness = 0;
    std::size_t removed_maf = 0;
    std::size_t removed_hwe = 0;
    std::size_t imputed_cells = 0;
    std::size_t surviving = 0;
    QcThresholds thresholds;
    std::vector<std::string> dropped_missingness;
    std::vector<std::string> dropped_maf;
    std::vector<std::string> dropped_hwe;
};

// Drops columns whose missing fraction strictly exceeds threshold.
std::pair<GenotypeMatrix, std::vector<std::string>> filter_missingness(
    const GenotypeMatrix& g, double threshold);

// Fills each missing cell with the column mean of observed values, rounded
// half away from zero. Every column must have at least one observed value.
std::pair<GenotypeMatrix, std::size_t> impute_round_mean(const GenotypeMatrix& g);

// Minor allele frequency min(p, 1-p) of a fully observed column.
double maf(const std::vector<std::int8_t>& column);

// Chi-square goodness-of-fit p-value (1 degree of freedom) for genotype
// counts (n0, n1, n2) against Hardy-Weinberg expected proportions.
double hwe_p_value(std::size_t n0, std::size_t n1, std::size_t n2);

// missingness filter -> round-mean imputation -> MAF filter -> HWE filter.
std::pair<GenotypeMatrix, QcReport> qc_pipeline(const GenotypeMatrix& g,
                                                QcThresholds thresholds = {});

// Delimited text: header "id,<snp ids...>", cells in {0,1,2} or NA.
GenotypeMatrix read_genotypes(const std::string& path);
void write_genotypes(const GenotypeMatrix& g, const std::string& path);

}  // namespace imml
