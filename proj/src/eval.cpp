#include "mmlab/eval.hpp"

#include <sstream>
#include <stdexcept>

namespace mmlab::eval {

std::uint64_t layer_checksum(const nn::DenseLayer& l) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    };
    mix(l.w.data(), static_cast<std::size_t>(l.w.size()) * 4);
    mix(l.b.data(), l.b.size() * 4);
    return h;
}

ProbeReport linear_probe(const ModelBundle& bundle, int modality_tap, const SyntheticDataset& ds,
                         const SplitSpec& split, const TrainConfig& cfg) {
    const auto train_idx = split.train_indices();
    const bool is_uni = bundle.kind == "uni";
    if (!is_uni && bundle.kind != "fusion") throw std::invalid_argument("linear_probe: unknown bundle kind");
    if (!is_uni && modality_tap != 1 && modality_tap != 2)
        throw std::invalid_argument("linear_probe: fusion bundles need modality_tap 1 or 2");

    const nn::DenseLayer* enc = nullptr;
    int modality = modality_tap;
    std::string encoder_id;
    bool enc_relu = true;  // uni encoders are always affine+ReLU
    if (is_uni) {
        enc = &bundle.uni->enc;
        modality = bundle.modality;
        encoder_id = "uni" + std::to_string(modality) + ".enc";
    } else {
        enc = modality_tap == 1 ? &bundle.fusion->enc1 : &bundle.fusion->enc2;
        enc_relu = bundle.fusion->enc_act == model::EncActivation::Relu;
        encoder_id = "fusion.enc" + std::to_string(modality_tap);
    }
    const Matrix& x = modality == 1 ? ds.x1 : ds.x2;
    if (x.cols() != enc->in_dim()) throw std::invalid_argument("linear_probe: encoder/data dim mismatch");

    // the probe reads the same post-activation features the fusion stage sees
    const std::uint64_t before = layer_checksum(*enc);
    Matrix features = enc->forward(x);
    if (enc_relu) features = nn::relu_forward(features);
    Matrix ftr = synthgen::gather_rows(features, train_idx);
    Matrix fte = synthgen::gather_rows(features, split.test_indices);
    const auto ytr = synthgen::gather_labels(ds.labels, train_idx);
    const auto yte = synthgen::gather_labels(ds.labels, split.test_indices);

    const auto fit = training::fit_linear_softmax(ftr, ytr, fte, yte, ds.n_classes, cfg);
    if (layer_checksum(*enc) != before)
        throw std::logic_error("linear_probe: encoder parameters changed during probing");

    ProbeReport rep;
    rep.encoder_id = encoder_id;
    rep.probe_train_acc = fit.train_acc;
    rep.probe_test_acc = fit.test_acc;
    rep.seed = cfg.seed;
    rep.probe_config = cfg;
    return rep;
}

std::int64_t ConfusionMatrix::row_total(std::uint32_t actual) const {
    std::int64_t t = 0;
    for (std::uint32_t j = 0; j < k; ++j) t += at(actual, j);
    return t;
}

double ConfusionMatrix::percent(std::uint32_t actual, std::uint32_t predicted) const {
    const std::int64_t t = row_total(actual);
    return t > 0 ? 100.0 * static_cast<double>(at(actual, predicted)) / static_cast<double>(t) : 0.0;
}

double ConfusionMatrix::overall_accuracy() const {
    std::int64_t trace = 0, total = 0;
    for (std::uint32_t i = 0; i < k; ++i) {
        trace += at(i, i);
        total += row_total(i);
    }
    return total > 0 ? static_cast<double>(trace) / static_cast<double>(total) : 0.0;
}

std::string ConfusionMatrix::to_csv() const {
    std::ostringstream os;
    os << "actual\\predicted";
    for (std::uint32_t j = 0; j < k; ++j) os << ",c" << j;
    os << "\n";
    for (std::uint32_t i = 0; i < k; ++i) {
        os << "c" << i;
        for (std::uint32_t j = 0; j < k; ++j) os << "," << at(i, j);
        os << "\n";
    }
    return os.str();
}

ConfusionMatrix confusion(const std::vector<std::uint32_t>& predictions,
                          const std::vector<std::uint32_t>& labels, std::uint32_t k) {
    if (predictions.size() != labels.size()) throw std::invalid_argument("confusion: size mismatch");
    ConfusionMatrix cm;
    cm.k = k;
    cm.counts.assign(static_cast<std::size_t>(k) * k, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= k || predictions[i] >= k)
            throw std::invalid_argument("confusion: label or prediction out of range");
        ++cm.counts[static_cast<std::size_t>(labels[i]) * k + predictions[i]];
    }
    return cm;
}

std::vector<std::optional<double>> per_class_accuracy(const std::vector<std::uint32_t>& predictions,
                                                      const std::vector<std::uint32_t>& labels,
                                                      std::uint32_t k) {
    const auto cm = confusion(predictions, labels, k);
    std::vector<std::optional<double>> out(k);
    for (std::uint32_t i = 0; i < k; ++i) {
        const std::int64_t t = cm.row_total(i);
        if (t > 0) out[i] = static_cast<double>(cm.at(i, i)) / static_cast<double>(t);
    }
    return out;
}

}  // namespace mmlab::eval
