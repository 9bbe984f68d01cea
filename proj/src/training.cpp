#include "mmlab/training.hpp"

#include <cassert>
#include <chrono>
#include <cstring>
#include <set>
#include <stdexcept>

#include "mmlab/kernels.hpp"

namespace mmlab::training {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void scale_inplace(Matrix& m, float s) {
    for (std::int64_t i = 0; i < m.size(); ++i) m.data()[i] *= s;
}

void add_scaled(Matrix& dst, const Matrix& src, float s) {
    if (!dst.same_shape(src)) throw std::invalid_argument("add_scaled: shape mismatch");
    kernels::axpy(s, src.data(), dst.data(), dst.size());
}

void step_layer(nn::DenseLayer& l, const Matrix& gw, const std::vector<float>& gb, float lr) {
    nn::sgd_step(l.w.storage(), gw.storage(), lr);
    nn::sgd_step(l.b, gb, lr);
}

struct GatheredData {
    Matrix x1_train, x2_train, x1_test, x2_test;
    std::vector<std::uint32_t> y_train, y_test;
};

GatheredData gather(const SyntheticDataset& ds, const SplitSpec& split) {
    const auto train_idx = split.train_indices();
    GatheredData g;
    g.x1_train = synthgen::gather_rows(ds.x1, train_idx);
    g.x2_train = synthgen::gather_rows(ds.x2, train_idx);
    g.y_train = synthgen::gather_labels(ds.labels, train_idx);
    g.x1_test = synthgen::gather_rows(ds.x1, split.test_indices);
    g.x2_test = synthgen::gather_rows(ds.x2, split.test_indices);
    g.y_test = synthgen::gather_labels(ds.labels, split.test_indices);
    return g;
}

}  // namespace

std::vector<std::uint32_t> argmax_rows(const Matrix& logits) {
    std::vector<std::uint32_t> out(static_cast<std::size_t>(logits.rows()));
    for (std::int64_t i = 0; i < logits.rows(); ++i) {
        const float* row = logits.row(i);
        std::uint32_t best = 0;
        for (std::int64_t j = 1; j < logits.cols(); ++j)
            if (row[j] > row[best]) best = static_cast<std::uint32_t>(j);
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

double accuracy(const Matrix& logits, const std::vector<std::uint32_t>& labels) {
    if (static_cast<std::int64_t>(labels.size()) != logits.rows())
        throw std::invalid_argument("accuracy: label count mismatch");
    if (labels.empty()) return 0.0;
    const auto preds = argmax_rows(logits);
    std::int64_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hit += preds[i] == labels[i];
    return static_cast<double>(hit) / static_cast<double>(labels.size());
}

FusionTrainResult train_fusion_engine(const Matrix& x1_train, const Matrix& x2_train,
                                      const std::vector<std::uint32_t>& y_train,
                                      const Matrix& x1_test, const Matrix& x2_test,
                                      const std::vector<std::uint32_t>& y_test,
                                      std::uint32_t n_classes, const TrainConfig& cfg,
                                      const FusionOptions& opts) {
    if (x1_train.rows() != x2_train.rows() ||
        x1_train.rows() != static_cast<std::int64_t>(y_train.size()))
        throw std::invalid_argument("train_fusion_engine: train size mismatch");
    if (opts.drop_prob < 0.0 || opts.drop_prob >= 1.0)
        throw std::invalid_argument("train_fusion_engine: drop_prob must be in [0,1)");
    const bool distill = opts.lambda_distill > 0.0;
    if (distill && (!opts.teacher1 || !opts.teacher2))
        throw std::invalid_argument("train_fusion_engine: distillation needs both teachers");
    if (distill && (opts.teacher1->enc.out_dim() != opts.hidden_per_enc ||
                    opts.teacher2->enc.out_dim() != opts.hidden_per_enc))
        throw std::invalid_argument("train_fusion_engine: teacher/student feature dim mismatch");

    const auto t0 = Clock::now();
    Rng rng(cfg.seed);

    FusionTrainResult res;
    res.model = FusionModel(x1_train.cols(), x2_train.cols(), opts.hidden_per_enc,
                            opts.head_hidden, n_classes, opts.head);
    FusionModel& m = res.model;
    m.enc_act = opts.enc_act;
    const bool enc_relu = opts.enc_act == model::EncActivation::Relu;
    if (opts.aux_ce) {
        m.aux1 = nn::DenseLayer(opts.hidden_per_enc, n_classes);
        m.aux2 = nn::DenseLayer(opts.hidden_per_enc, n_classes);
    }
    m.init(rng);

    // teachers are frozen and the train set is fixed, so their features are
    // loop invariants
    Matrix t1_features, t2_features;
    if (distill) {
        t1_features = opts.teacher1->features(x1_train);
        t2_features = opts.teacher2->features(x2_train);
    }

    const std::int64_t n = x1_train.rows();
    const std::int64_t h = opts.hidden_per_enc;
    const float lr = static_cast<float>(cfg.lr);

    int perfect_streak = 0;
    for (int it = 0; it < cfg.max_iters; ++it) {
        Matrix h1 = m.enc1.forward(x1_train);
        Matrix f1 = enc_relu ? nn::relu_forward(h1) : h1;
        Matrix h2 = m.enc2.forward(x2_train);
        Matrix f2 = enc_relu ? nn::relu_forward(h2) : h2;

        bool drop1 = false, drop2 = false;
        if (opts.drop_prob > 0.0) {
            if (opts.independent_drops) {
                drop1 = rng.uniform() < opts.drop_prob;
                drop2 = rng.uniform() < opts.drop_prob;
            } else if (rng.uniform() < opts.drop_prob) {
                (rng.coin() ? drop1 : drop2) = true;
            }
            res.drops1 += drop1;
            res.drops2 += drop2;
        }

        Matrix f1_in = f1, f2_in = f2;  // what the head actually sees
        if (drop1) f1_in.fill(0.0f);
        if (drop2) f2_in.fill(0.0f);

        Matrix fused = m.fused(f1_in, f2_in);

        Matrix hh, rh, logits;
        if (opts.head == HeadKind::Mlp) {
            hh = m.head_hidden.forward(fused);
            rh = nn::relu_forward(hh);
            logits = m.head_out.forward(rh);
        } else {
            logits = m.head_out.forward(fused);
        }
        assert(logits.all_finite());

        LossBreakdown lb;
        auto task = nn::softmax_xent(logits, y_train);
        lb.task = opts.lambda_task * task.loss;
        if (opts.lambda_task != 1.0) scale_inplace(task.grad, static_cast<float>(opts.lambda_task));

        // head backward
        Matrix gw_out, gw_hh;
        std::vector<float> gb_out, gb_hh;
        Matrix g_fused;
        if (opts.head == HeadKind::Mlp) {
            Matrix g_rh = m.head_out.backward(rh, task.grad, gw_out, gb_out, true);
            Matrix g_hh = nn::relu_backward(hh, g_rh);
            g_fused = m.head_hidden.backward(fused, g_hh, gw_hh, gb_hh, true);
        } else {
            g_fused = m.head_out.backward(fused, task.grad, gw_out, gb_out, true);
        }

        // split the fused gradient by modality block; a dropped block's
        // features were zeroed, so its gradient is zero too
        Matrix g_f1(n, h), g_f2(n, h);
        for (std::int64_t i = 0; i < n; ++i) {
            std::memcpy(g_f1.row(i), g_fused.row(i), static_cast<std::size_t>(h) * 4);
            std::memcpy(g_f2.row(i), g_fused.row(i) + h, static_cast<std::size_t>(h) * 4);
        }
        if (drop1) g_f1.fill(0.0f);
        if (drop2) g_f2.fill(0.0f);

        if (distill) {
            auto d1 = nn::mse(f1, t1_features);
            auto d2 = nn::mse(f2, t2_features);
            lb.distill1 = opts.lambda_distill * d1.loss;
            lb.distill2 = opts.lambda_distill * d2.loss;
            add_scaled(g_f1, d1.grad, static_cast<float>(opts.lambda_distill));
            add_scaled(g_f2, d2.grad, static_cast<float>(opts.lambda_distill));
        }

        Matrix gw_a1, gw_a2;
        std::vector<float> gb_a1, gb_a2;
        if (opts.aux_ce) {
            Matrix la1 = m.aux1->forward(f1);
            Matrix la2 = m.aux2->forward(f2);
            auto a1 = nn::softmax_xent(la1, y_train);
            auto a2 = nn::softmax_xent(la2, y_train);
            lb.aux1 = a1.loss;
            lb.aux2 = a2.loss;
            Matrix g1 = m.aux1->backward(f1, a1.grad, gw_a1, gb_a1, true);
            Matrix g2 = m.aux2->backward(f2, a2.grad, gw_a2, gb_a2, true);
            add_scaled(g_f1, g1, 1.0f);
            add_scaled(g_f2, g2, 1.0f);
        }

        Matrix g_h1 = enc_relu ? nn::relu_backward(h1, g_f1) : std::move(g_f1);
        Matrix g_h2 = enc_relu ? nn::relu_backward(h2, g_f2) : std::move(g_f2);
        Matrix gw_e1, gw_e2;
        std::vector<float> gb_e1, gb_e2;
        m.enc1.backward(x1_train, g_h1, gw_e1, gb_e1, false);
        m.enc2.backward(x2_train, g_h2, gw_e2, gb_e2, false);

        step_layer(m.enc1, gw_e1, gb_e1, lr);
        step_layer(m.enc2, gw_e2, gb_e2, lr);
        if (opts.head == HeadKind::Mlp) step_layer(m.head_hidden, gw_hh, gb_hh, lr);
        step_layer(m.head_out, gw_out, gb_out, lr);
        if (opts.aux_ce) {
            step_layer(*m.aux1, gw_a1, gb_a1, lr);
            step_layer(*m.aux2, gw_a2, gb_a2, lr);
        }

        lb.total = lb.task + lb.distill1 + lb.distill2 + lb.aux1 + lb.aux2;
        res.last_loss = lb;
        res.metrics.iters_run = it + 1;
        res.metrics.final_loss = lb.total;
        if (cfg.record_every > 0 && it % cfg.record_every == 0)
            res.metrics.loss_curve.push_back(lb.total);

        if (cfg.early_stop_window > 0) {
            const double acc = accuracy(logits, y_train);
            perfect_streak = acc == 1.0 ? perfect_streak + 1 : 0;
            if (perfect_streak >= cfg.early_stop_window) break;
        }
    }

    res.metrics.train_acc = accuracy(m.logits(x1_train, x2_train), y_train);
    if (!y_test.empty()) res.metrics.test_acc = accuracy(m.logits(x1_test, x2_test), y_test);
    res.metrics.wall_seconds = seconds_since(t0);
    return res;
}

ModelBundle train_unimodal(const SyntheticDataset& ds, const SplitSpec& split, int modality,
                           const TrainConfig& cfg, std::int64_t hidden) {
    if (modality != 1 && modality != 2) throw std::invalid_argument("train_unimodal: modality must be 1 or 2");
    const auto t0 = Clock::now();
    const auto g = gather(ds, split);
    const Matrix& xtr = modality == 1 ? g.x1_train : g.x2_train;
    const Matrix& xte = modality == 1 ? g.x1_test : g.x2_test;

    Rng rng(cfg.seed);
    UniModel m(xtr.cols(), hidden, ds.n_classes);
    m.init(rng);
    const float lr = static_cast<float>(cfg.lr);

    RunMetrics metrics;
    int perfect_streak = 0;
    for (int it = 0; it < cfg.max_iters; ++it) {
        Matrix h = m.enc.forward(xtr);
        Matrix f = nn::relu_forward(h);
        Matrix logits = m.head.forward(f);
        assert(logits.all_finite());
        auto task = nn::softmax_xent(logits, g.y_train);

        Matrix gw_head, gw_enc;
        std::vector<float> gb_head, gb_enc;
        Matrix g_f = m.head.backward(f, task.grad, gw_head, gb_head, true);
        Matrix g_h = nn::relu_backward(h, g_f);
        m.enc.backward(xtr, g_h, gw_enc, gb_enc, false);

        step_layer(m.enc, gw_enc, gb_enc, lr);
        step_layer(m.head, gw_head, gb_head, lr);

        metrics.iters_run = it + 1;
        metrics.final_loss = task.loss;
        if (cfg.record_every > 0 && it % cfg.record_every == 0)
            metrics.loss_curve.push_back(task.loss);
        if (cfg.early_stop_window > 0) {
            const double acc = accuracy(logits, g.y_train);
            perfect_streak = acc == 1.0 ? perfect_streak + 1 : 0;
            if (perfect_streak >= cfg.early_stop_window) break;
        }
    }

    metrics.train_acc = accuracy(m.logits(xtr), g.y_train);
    metrics.test_acc = accuracy(m.logits(xte), g.y_test);
    metrics.wall_seconds = seconds_since(t0);

    ModelBundle b;
    b.kind = "uni";
    b.modality = modality;
    b.n_classes = ds.n_classes;
    b.config = cfg;
    b.metrics = metrics;
    b.strategy = modality == 1 ? "uni1" : "uni2";
    b.uni = std::move(m);
    return b;
}

namespace {

ModelBundle run_fusion_strategy(const SyntheticDataset& ds, const SplitSpec& split,
                                const TrainConfig& cfg, const FusionOptions& opts,
                                const std::string& strategy) {
    const auto g = gather(ds, split);
    auto res = train_fusion_engine(g.x1_train, g.x2_train, g.y_train, g.x1_test, g.x2_test,
                                   g.y_test, ds.n_classes, cfg, opts);
    ModelBundle b;
    b.kind = "fusion";
    b.n_classes = ds.n_classes;
    b.config = cfg;
    b.metrics = res.metrics;
    b.strategy = strategy;
    b.fusion = std::move(res.model);
    return b;
}

}  // namespace

ModelBundle train_naive_fusion(const SyntheticDataset& ds, const SplitSpec& split,
                               HeadKind head, const TrainConfig& cfg,
                               model::EncActivation enc_act) {
    FusionOptions opts;
    opts.head = head;
    opts.enc_act = enc_act;
    return run_fusion_strategy(ds, split, cfg, opts, "naive");
}

ModelBundle train_umt(const SyntheticDataset& ds, const SplitSpec& split, const UMTConfig& umt,
                      const TrainConfig& cfg, HeadKind head, model::EncActivation enc_act) {
    FusionOptions opts;
    opts.head = head;
    opts.enc_act = enc_act;
    opts.lambda_task = umt.lambda_task;
    opts.lambda_distill = umt.lambda_distill;
    opts.teacher1 = umt.teacher1;
    opts.teacher2 = umt.teacher2;
    return run_fusion_strategy(ds, split, cfg, opts, "umt");
}

ModelBundle train_aux_ce(const SyntheticDataset& ds, const SplitSpec& split,
                         const TrainConfig& cfg, HeadKind head, model::EncActivation enc_act) {
    FusionOptions opts;
    opts.head = head;
    opts.enc_act = enc_act;
    opts.aux_ce = true;
    return run_fusion_strategy(ds, split, cfg, opts, "aux");
}

ModelBundle train_modality_dropout(const SyntheticDataset& ds, const SplitSpec& split,
                                   double drop_prob, const TrainConfig& cfg, HeadKind head,
                                   bool independent_drops, model::EncActivation enc_act) {
    FusionOptions opts;
    opts.head = head;
    opts.enc_act = enc_act;
    opts.drop_prob = drop_prob;
    opts.independent_drops = independent_drops;
    return run_fusion_strategy(ds, split, cfg, opts, "dropout");
}

Matrix ume_probs(const UniModel& m1, const UniModel& m2, const Matrix& x1, const Matrix& x2,
                 double w1, double w2) {
    if (m1.head.out_dim() != m2.head.out_dim())
        throw std::invalid_argument("ume_probs: class-count mismatch");
    if (w1 < 0.0 || w2 < 0.0 || w1 + w2 <= 0.0)
        throw std::invalid_argument("ume_probs: weights must be non-negative with positive sum");
    const float a = static_cast<float>(w1 / (w1 + w2));
    const float b = static_cast<float>(w2 / (w1 + w2));
    Matrix p1 = nn::softmax(m1.logits(x1));
    Matrix p2 = nn::softmax(m2.logits(x2));
    Matrix out(p1.rows(), p1.cols());
    for (std::int64_t i = 0; i < out.size(); ++i)
        out.data()[i] = a * p1.data()[i] + b * p2.data()[i];
    return out;
}

std::vector<std::uint32_t> ume_predict(const UniModel& m1, const UniModel& m2, const Matrix& x1,
                                       const Matrix& x2, double w1, double w2) {
    return argmax_rows(ume_probs(m1, m2, x1, x2, w1, w2));
}

std::pair<nn::DenseLayer, nn::DenseLayer> split_mm_classifier(const nn::DenseLayer& head,
                                                              std::int64_t dim1) {
    if (dim1 <= 0 || dim1 >= head.in_dim())
        throw std::invalid_argument("split_mm_classifier: bad block boundary");
    const std::int64_t k = head.out_dim();
    const std::int64_t dim2 = head.in_dim() - dim1;
    nn::DenseLayer c1(dim1, k), c2(dim2, k);
    for (std::int64_t r = 0; r < k; ++r) {
        std::memcpy(c1.w.row(r), head.w.row(r), static_cast<std::size_t>(dim1) * 4);
        std::memcpy(c2.w.row(r), head.w.row(r) + dim1, static_cast<std::size_t>(dim2) * 4);
    }
    c1.b = head.b;
    c2.b = head.b;
    return {std::move(c1), std::move(c2)};
}

LinearFit fit_linear_softmax(const Matrix& f_train, const std::vector<std::uint32_t>& y_train,
                             const Matrix& f_test, const std::vector<std::uint32_t>& y_test,
                             std::uint32_t n_classes, const TrainConfig& cfg) {
    Rng rng(cfg.seed);
    LinearFit fit;
    fit.clf = nn::DenseLayer(f_train.cols(), n_classes);
    fit.clf.init(rng);
    const float lr = static_cast<float>(cfg.lr);
    int perfect_streak = 0;
    for (int it = 0; it < cfg.max_iters; ++it) {
        Matrix logits = fit.clf.forward(f_train);
        auto task = nn::softmax_xent(logits, y_train);
        Matrix gw;
        std::vector<float> gb;
        fit.clf.backward(f_train, task.grad, gw, gb, false);
        step_layer(fit.clf, gw, gb, lr);
        fit.iters_run = it + 1;
        if (cfg.early_stop_window > 0) {
            perfect_streak = accuracy(logits, y_train) == 1.0 ? perfect_streak + 1 : 0;
            if (perfect_streak >= cfg.early_stop_window) break;
        }
    }
    fit.train_acc = accuracy(fit.clf.forward(f_train), y_train);
    if (!y_test.empty()) fit.test_acc = accuracy(fit.clf.forward(f_test), y_test);
    return fit;
}

DecisionResult decision_trick(const SyntheticDataset& ds, const SplitSpec& split,
                              const TrainConfig& cfg) {
    TrainConfig c1 = cfg, c2 = cfg, c3 = cfg;
    c1.seed = derive_seed(cfg.seed, 1);
    c2.seed = derive_seed(cfg.seed, 2);
    c3.seed = derive_seed(cfg.seed, 3);

    auto b1 = train_unimodal(ds, split, 1, c1);
    auto b2 = train_unimodal(ds, split, 2, c2);
    const UniModel& m1 = *b1.uni;
    const UniModel& m2 = *b2.uni;

    const auto g = gather(ds, split);

    // linear classifier on the frozen, concatenated features
    FusionModel probe_net;  // only used for the concat helper
    Matrix ftr = probe_net.fused(m1.features(g.x1_train), m2.features(g.x2_train));
    Matrix fte = probe_net.fused(m1.features(g.x1_test), m2.features(g.x2_test));

    const auto fit = fit_linear_softmax(ftr, g.y_train, fte, g.y_test, ds.n_classes, c3);

    DecisionResult res;
    res.mm_clf_acc = fit.test_acc;
    const auto ume = ume_predict(m1, m2, g.x1_test, g.x2_test);
    std::int64_t hit = 0;
    for (std::size_t i = 0; i < ume.size(); ++i) hit += ume[i] == g.y_test[i];
    res.avg_pred_acc = g.y_test.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(ume.size());
    res.degenerate = std::set<std::uint32_t>(g.y_train.begin(), g.y_train.end()).size() < 2;
    res.recommendation = res.mm_clf_acc > res.avg_pred_acc ? "UMT" : "UME";
    return res;
}

}  // namespace mmlab::training
