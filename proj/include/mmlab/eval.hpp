#pragma once
// Evaluation toolkit: linear probing of frozen encoders, confusion
// matrices, per-class accuracy.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmlab/training.hpp"

namespace mmlab::eval {

using model::ModelBundle;
using model::TrainConfig;
using synthgen::SplitSpec;
using synthgen::SyntheticDataset;

struct ProbeReport {
    std::string encoder_id;  // e.g. "uni1.enc", "fusion.enc2"
    double probe_train_acc = 0.0;
    double probe_test_acc = 0.0;
    std::uint64_t seed = 0;
    TrainConfig probe_config;
};

// Trains a fresh linear softmax classifier on the frozen encoder's
// features. The encoder is never mutated (verified by checksum; throws if
// the checksum changes). modality_tap selects which encoder of a fusion
// bundle to probe; ignored for uni bundles.
ProbeReport linear_probe(const ModelBundle& bundle, int modality_tap, const SyntheticDataset& ds,
                         const SplitSpec& split, const TrainConfig& cfg);

struct ConfusionMatrix {
    std::uint32_t k = 0;
    std::vector<std::int64_t> counts;  // row-major k*k, row = actual

    std::int64_t at(std::uint32_t actual, std::uint32_t predicted) const {
        return counts[static_cast<std::size_t>(actual) * k + predicted];
    }
    std::int64_t row_total(std::uint32_t actual) const;
    // row-normalized percentage; 0 for empty rows
    double percent(std::uint32_t actual, std::uint32_t predicted) const;
    double overall_accuracy() const;  // trace / N
    std::string to_csv() const;
};

ConfusionMatrix confusion(const std::vector<std::uint32_t>& predictions,
                          const std::vector<std::uint32_t>& labels, std::uint32_t k);

// Diagonal of the row-normalized confusion; empty classes are nullopt.
std::vector<std::optional<double>> per_class_accuracy(const std::vector<std::uint32_t>& predictions,
                                                      const std::vector<std::uint32_t>& labels,
                                                      std::uint32_t k);

// FNV-1a over a layer's parameter bytes; probe no-mutation guard.
std::uint64_t layer_checksum(const nn::DenseLayer& l);

}  // namespace mmlab::eval
