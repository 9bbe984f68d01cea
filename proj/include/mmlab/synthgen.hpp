#pragma once
// Synthetic multi-modal dataset generators (variants alpha, beta, gamma),
// train/test splitting, and the on-disk binary format.
//
// Bit-reproducibility contract: for a fixed (config, seed) the output file
// is byte-identical across runs. The PRNG stream order is part of the
// format: P1 row-major, then P2, then z (where used), then per-sample
// latent draws in generation order. Gaussian vectors consume one
// Box-Muller pair per two entries; an odd final entry discards its pair's
// second value.

#include <cstdint>
#include <string>
#include <vector>

#include "mmlab/matrix.hpp"

namespace mmlab::synthgen {

enum class Variant : std::uint8_t { Alpha = 0, Beta = 1, Gamma = 2 };

const char* variant_name(Variant v);

struct GenConfig {
    std::int64_t d1 = 200;
    std::int64_t d2 = 100;
    std::int64_t d = 50;
    std::int64_t n = 5000;
    std::uint64_t seed = 0;
    Variant variant = Variant::Alpha;
    // Gamma only: collect phase-2 classes in equal numbers (2500 each)
    // instead of first-come. See the README's note on dataset gamma.
    bool gamma_balanced = true;

    void validate() const;
};

struct SyntheticDataset {
    Matrix x1;                         // N x d1
    Matrix x2;                         // N x d2
    std::vector<std::uint32_t> labels; // N, values in [0, n_classes)
    std::uint32_t n_classes = 2;
    GenConfig meta;
    std::string generator_version = "mmlab-gen-1";

    // diagnostics from the rejection loops
    std::int64_t total_draws = 0;
    std::int64_t accepted = 0;
    double acceptance_rate() const {
        return total_draws > 0 ? static_cast<double>(accepted) / static_cast<double>(total_draws) : 0.0;
    }

    std::int64_t n() const { return static_cast<std::int64_t>(labels.size()); }
    void check_invariants() const;  // throws on violation
};

struct SplitSpec {
    std::vector<std::uint32_t> test_indices;  // sorted, unique
    double train_fraction = 0.8;
    std::int64_t n_total = 0;

    std::vector<std::uint32_t> train_indices() const;
};

// Per-sample rejection cap (alpha/gamma phase 1) and total draw cap
// (beta/gamma phase 2). Exceeding either aborts with a diagnostic.
inline constexpr std::int64_t kPerSampleRejectionCap = 10'000'000;
inline constexpr std::int64_t kTotalDrawCap = 100'000'000;

SyntheticDataset generate(const GenConfig& cfg);

SplitSpec split(const SyntheticDataset& ds, double train_fraction, std::uint64_t seed);

// Binary dataset file, little-endian. Throws on bad magic / truncation /
// invariant violations. A sidecar JSON (<path>.json) carries the config.
void save(const SyntheticDataset& ds, const std::string& path);
SyntheticDataset load(const std::string& path);

void save_split(const SplitSpec& sp, const std::string& path);
SplitSpec load_split(const std::string& path);

// Row/label selection used to materialize train/test subsets.
Matrix gather_rows(const Matrix& m, const std::vector<std::uint32_t>& idx);
std::vector<std::uint32_t> gather_labels(const std::vector<std::uint32_t>& labels,
                                         const std::vector<std::uint32_t>& idx);

}  // namespace mmlab::synthgen
