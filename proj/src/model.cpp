#include "mmlab/model.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace mmlab::model {

namespace {

constexpr char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

nlohmann::json layer_to_json(const nn::DenseLayer& l) {
    nlohmann::json j;
    j["shape"] = {l.out_dim(), l.in_dim()};
    j["w"] = encode_params(l.w.storage());
    j["b"] = encode_params(l.b);
    return j;
}

nn::DenseLayer layer_from_json(const nlohmann::json& j) {
    const auto shape = j.at("shape");
    const std::int64_t out = shape.at(0), in = shape.at(1);
    nn::DenseLayer l(in, out);
    auto w = decode_params(j.at("w").get<std::string>());
    auto b = decode_params(j.at("b").get<std::string>());
    if (static_cast<std::int64_t>(w.size()) != in * out || static_cast<std::int64_t>(b.size()) != out)
        throw std::runtime_error("ModelBundle: parameter block size mismatch");
    l.w = Matrix(out, in, std::move(w));
    l.b = std::move(b);
    return l;
}

}  // namespace

std::string encode_params(const std::vector<float>& v) {
    // f32 values are stored little-endian; this code assumes an LE host
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
    const std::size_t n = v.size() * 4;
    std::string out;
    out.reserve((n + 2) / 3 * 4);
    for (std::size_t i = 0; i < n; i += 3) {
        const unsigned b0 = bytes[i];
        const unsigned b1 = i + 1 < n ? bytes[i + 1] : 0;
        const unsigned b2 = i + 2 < n ? bytes[i + 2] : 0;
        out.push_back(kB64Alphabet[b0 >> 2]);
        out.push_back(kB64Alphabet[((b0 & 3) << 4) | (b1 >> 4)]);
        out.push_back(i + 1 < n ? kB64Alphabet[((b1 & 15) << 2) | (b2 >> 6)] : '=');
        out.push_back(i + 2 < n ? kB64Alphabet[b2 & 63] : '=');
    }
    return out;
}

std::vector<float> decode_params(const std::string& b64) {
    std::vector<unsigned char> bytes;
    bytes.reserve(b64.size() / 4 * 3);
    int acc = 0, bits = 0;
    for (char c : b64) {
        if (c == '=' || c == '\n') continue;
        const int v = b64_value(c);
        if (v < 0) throw std::runtime_error("ModelBundle: invalid base64");
        acc = (acc << 6) | v;
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            bytes.push_back(static_cast<unsigned char>((acc >> bits) & 0xff));
        }
    }
    if (bytes.size() % 4 != 0) throw std::runtime_error("ModelBundle: parameter block not f32-aligned");
    std::vector<float> out(bytes.size() / 4);
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

FusionModel::FusionModel(std::int64_t d1, std::int64_t d2, std::int64_t hidden_per_enc,
                         std::int64_t head_hidden_dim, std::int64_t n_classes, HeadKind head)
    : enc1(d1, hidden_per_enc), enc2(d2, hidden_per_enc), head_kind(head) {
    const std::int64_t fused_dim = 2 * hidden_per_enc;
    if (head_kind == HeadKind::Mlp) {
        head_hidden = nn::DenseLayer(fused_dim, head_hidden_dim);
        head_out = nn::DenseLayer(head_hidden_dim, n_classes);
    } else {
        head_out = nn::DenseLayer(fused_dim, n_classes);
    }
}

void FusionModel::init(Rng& rng) {
    enc1.init(rng);
    enc2.init(rng);
    if (head_kind == HeadKind::Mlp) head_hidden.init(rng);
    head_out.init(rng);
    if (aux1) aux1->init(rng);
    if (aux2) aux2->init(rng);
}

Matrix FusionModel::fused(const Matrix& f1, const Matrix& f2) const {
    if (f1.rows() != f2.rows()) throw std::invalid_argument("FusionModel: row mismatch");
    Matrix out(f1.rows(), f1.cols() + f2.cols());
    for (std::int64_t i = 0; i < f1.rows(); ++i) {
        std::memcpy(out.row(i), f1.row(i), static_cast<std::size_t>(f1.cols()) * 4);
        std::memcpy(out.row(i) + f1.cols(), f2.row(i), static_cast<std::size_t>(f2.cols()) * 4);
    }
    return out;
}

Matrix FusionModel::head_logits(const Matrix& fused_features) const {
    if (head_kind == HeadKind::Mlp)
        return head_out.forward(nn::relu_forward(head_hidden.forward(fused_features)));
    return head_out.forward(fused_features);
}

std::string ModelBundle::to_json_text() const {
    nlohmann::json j;
    j["kind"] = kind;
    j["modality"] = modality;
    j["n_classes"] = n_classes;
    j["strategy"] = strategy;
    j["config"] = {{"lr", config.lr},
                   {"max_iters", config.max_iters},
                   {"seed", config.seed},
                   {"early_stop_window", config.early_stop_window},
                   {"record_every", config.record_every}};
    j["metrics"] = {{"train_acc", metrics.train_acc},
                    {"test_acc", metrics.test_acc},
                    {"iters_run", metrics.iters_run},
                    {"final_loss", metrics.final_loss},
                    {"loss_curve", metrics.loss_curve},
                    {"wall_seconds", metrics.wall_seconds}};
    nlohmann::json params;
    if (kind == "uni") {
        if (!uni) throw std::runtime_error("ModelBundle: uni kind without uni model");
        params["enc"] = layer_to_json(uni->enc);
        params["head"] = layer_to_json(uni->head);
    } else if (kind == "fusion") {
        if (!fusion) throw std::runtime_error("ModelBundle: fusion kind without fusion model");
        params["enc1"] = layer_to_json(fusion->enc1);
        params["enc2"] = layer_to_json(fusion->enc2);
        j["head_kind"] = fusion->head_kind == HeadKind::Mlp ? "mlp" : "linear";
        j["enc_act"] = fusion->enc_act == EncActivation::Relu ? "relu" : "identity";
        if (fusion->head_kind == HeadKind::Mlp) params["head_hidden"] = layer_to_json(fusion->head_hidden);
        params["head_out"] = layer_to_json(fusion->head_out);
        if (fusion->aux1) params["aux1"] = layer_to_json(*fusion->aux1);
        if (fusion->aux2) params["aux2"] = layer_to_json(*fusion->aux2);
    } else {
        throw std::runtime_error("ModelBundle: unknown kind '" + kind + "'");
    }
    j["params"] = std::move(params);
    return j.dump();
}

ModelBundle ModelBundle::from_json_text(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    ModelBundle b;
    b.kind = j.at("kind").get<std::string>();
    b.modality = j.value("modality", 0);
    b.n_classes = j.value("n_classes", 2u);
    b.strategy = j.value("strategy", std::string{});
    if (j.contains("config")) {
        const auto& c = j["config"];
        b.config.lr = c.value("lr", 0.2);
        b.config.max_iters = c.value("max_iters", 3000);
        b.config.seed = c.value("seed", std::uint64_t{0});
        b.config.early_stop_window = c.value("early_stop_window", 50);
        b.config.record_every = c.value("record_every", 10);
    }
    if (j.contains("metrics")) {
        const auto& m = j["metrics"];
        b.metrics.train_acc = m.value("train_acc", 0.0);
        b.metrics.test_acc = m.value("test_acc", 0.0);
        b.metrics.iters_run = m.value("iters_run", 0);
        b.metrics.final_loss = m.value("final_loss", 0.0);
        b.metrics.loss_curve = m.value("loss_curve", std::vector<double>{});
        b.metrics.wall_seconds = m.value("wall_seconds", 0.0);
    }
    const auto& params = j.at("params");
    if (b.kind == "uni") {
        UniModel m;
        m.enc = layer_from_json(params.at("enc"));
        m.head = layer_from_json(params.at("head"));
        b.uni = std::move(m);
    } else if (b.kind == "fusion") {
        FusionModel m;
        m.enc1 = layer_from_json(params.at("enc1"));
        m.enc2 = layer_from_json(params.at("enc2"));
        m.head_kind = j.value("head_kind", std::string("mlp")) == "linear" ? HeadKind::Linear : HeadKind::Mlp;
        m.enc_act = j.value("enc_act", std::string("identity")) == "relu" ? EncActivation::Relu
                                                                          : EncActivation::Identity;
        if (m.head_kind == HeadKind::Mlp) m.head_hidden = layer_from_json(params.at("head_hidden"));
        m.head_out = layer_from_json(params.at("head_out"));
        if (params.contains("aux1")) m.aux1 = layer_from_json(params.at("aux1"));
        if (params.contains("aux2")) m.aux2 = layer_from_json(params.at("aux2"));
        b.fusion = std::move(m);
    } else {
        throw std::runtime_error("ModelBundle: unknown kind '" + b.kind + "'");
    }
    return b;
}

void ModelBundle::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("ModelBundle: cannot open for write: " + path);
    f << to_json_text() << "\n";
}

ModelBundle ModelBundle::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("ModelBundle: cannot open: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

}  // namespace mmlab::model
