#pragma once

#include <algorithm>
#include <array>
#include <fstream>

#include "gradroute/data/metrics.hpp"
#include "gradroute/data/mnist.hpp"
#include "gradroute/nn/layers.hpp"
#include "gradroute/nn/losses.hpp"
#include "gradroute/optim/optim.hpp"

namespace gradroute {

enum class Scale { Desk, Paper };

// Split-autoencoder study: route digit groups to encoding halves, then train
// a Certificate on the bottom half only.
struct SplitAeConfig {
    int preset_id = 1;
    size_t enc_h1 = 2048, enc_h2 = 512; // encoder 784 -> h1 -> h2 -> encoding
    size_t encoding = 32, split = 16;   // top half = [0, split)
    double l1_top = 0.003, l1_bottom = 0.003;
    double corr_weight = 0.1;
    bool routing = true;
    bool separate_decoders = false;
    bool bottom_all_digits = false; // bottom half receives gradients from all digits
    bool train_59_only = false;
    size_t epochs = 200, batch = 2048;
    size_t n_train = 0; // 0 = full training split
    double lr = 1e-3, weight_decay = 5e-5;

    void validate() const {
        if (split == 0 || split >= encoding)
            throw config_error("SplitAeConfig: split must be strictly inside the encoding");
        if (epochs == 0 || batch == 0) throw config_error("SplitAeConfig: epochs/batch positive");
    }
};

// Table-style ablation presets 1..10.
inline SplitAeConfig mnist_preset(int id, Scale scale) {
    if (id < 1 || id > 10) throw usage_error("mnist preset id must be in 1..10");
    SplitAeConfig c;
    c.preset_id = id;
    switch (id) {
        case 1: break;
        case 2: c.separate_decoders = true; break;
        case 3: c.corr_weight = 0; break;
        case 4: c.l1_top = c.l1_bottom = 0; c.corr_weight = 0; break;
        case 5: c.l1_top = c.l1_bottom = 0; c.corr_weight = 0; c.separate_decoders = true; break;
        case 6: c.bottom_all_digits = true; c.l1_bottom = 2e-2; break;
        case 7: c.routing = false; c.l1_top = c.l1_bottom = 1e-3; c.corr_weight = 0;
                c.train_59_only = true; break;
        case 8: c.routing = false; c.l1_top = c.l1_bottom = 0; c.corr_weight = 0;
                c.train_59_only = true; break;
        case 9: c.routing = false; break;
        case 10: c.routing = false; c.l1_top = c.l1_bottom = 0; c.corr_weight = 0; break;
    }
    if (scale == Scale::Desk) {
        c.enc_h1 = 512;
        c.enc_h2 = 128;
        c.epochs = 100;
        c.batch = 128;
        c.n_train = 2000;
        c.lr = 2e-3;
    }
    return c;
}

template <class T>
struct SplitAeModels {
    SplitAeConfig cfg;
    ParamStore<T> params;
    MlpSpec enc_spec, dec_spec, cert_spec;
};

template <class T>
SplitAeModels<T> init_split_ae(const SplitAeConfig& cfg, Rng& rng) {
    cfg.validate();
    SplitAeModels<T> m;
    m.cfg = cfg;
    m.enc_spec = MlpSpec{{784, cfg.enc_h1, cfg.enc_h2, cfg.encoding}, Activation::Relu,
                         /*final_affine=*/false};
    m.dec_spec = MlpSpec{{cfg.encoding, cfg.enc_h2, cfg.enc_h1, 784}, Activation::Relu, true};
    m.cert_spec = MlpSpec{{cfg.encoding - cfg.split, cfg.enc_h2, cfg.enc_h1, 784},
                          Activation::Relu, true};
    init_mlp_params(m.params, "enc", m.enc_spec, rng);
    init_mlp_params(m.params, "dec", m.dec_spec, rng);
    if (cfg.separate_decoders) init_mlp_params(m.params, "dec2", m.dec_spec, rng);
    init_mlp_params(m.params, "cert", m.cert_spec, rng);
    return m;
}

namespace detail {

template <class T>
Tensor<T> batch_tensor(const MnistDataset& ds, const std::vector<size_t>& idx) {
    auto data = std::make_shared<std::vector<T>>(idx.size() * 784);
    for (size_t i = 0; i < idx.size(); ++i)
        for (size_t p = 0; p < 784; ++p) (*data)[i * 784 + p] = T(ds.images[idx[i] * 784 + p]);
    return Tensor<T>{{idx.size(), 784}, data};
}

} // namespace detail

// One training step's loss graph. Routing: per-sample mask weights on the two
// encoding slices feeding the reconstruction path only; penalties and the
// Certificate read the unrouted encoding.
template <class T>
struct SplitAeStepOut {
    Tensor<T> total;
    double rec = 0, cert = 0;
};

template <class T>
SplitAeStepOut<T> split_ae_loss(Tape<T>& tape, const SplitAeModels<T>& m, const Tensor<T>& x,
                                const std::vector<int>& labels) {
    const auto& cfg = m.cfg;
    size_t B = x.shape[0], split = cfg.split, bot = cfg.encoding - split;
    Tensor<T> z = mlp_forward(tape, m.params, "enc", m.enc_spec, x);

    Tensor<T> z_rec = z;
    if (cfg.routing) {
        auto wt = std::make_shared<std::vector<T>>(B), wb = std::make_shared<std::vector<T>>(B);
        for (size_t i = 0; i < B; ++i) {
            (*wt)[i] = labels[i] <= 4 ? T(1) : T(0);
            (*wb)[i] = (labels[i] >= 5 || cfg.bottom_all_digits) ? T(1) : T(0);
        }
        MaskSite<T> top{"enc.top", Tensor<T>{{B, 1}, wt}};
        MaskSite<T> bottom{"enc.bottom", Tensor<T>{{B, 1}, wb}};
        std::vector<Tensor<T>> parts = {route_mask(slice(z, 1, 0, split), top),
                                        route_mask(slice(z, 1, split, bot), bottom)};
        z_rec = concat(parts, 1);
    }

    Tensor<T> rec;
    if (cfg.separate_decoders) {
        // one decoder per digit group; each sample is reconstructed by the
        // decoder of its group
        Tensor<T> r1 = mlp_forward(tape, m.params, "dec", m.dec_spec, z_rec);
        Tensor<T> r2 = mlp_forward(tape, m.params, "dec2", m.dec_spec, z_rec);
        auto sel = std::make_shared<std::vector<T>>(B);
        for (size_t i = 0; i < B; ++i) (*sel)[i] = labels[i] <= 4 ? T(1) : T(0);
        Tensor<T> s{{B, 1}, sel};
        rec = add(mul(r1, s), mul(r2, add_scalar(neg(s), T(1))));
    } else {
        rec = mlp_forward(tape, m.params, "dec", m.dec_spec, z_rec);
    }
    Tensor<T> l_rec = mae_loss(rec, x.detached());

    Tensor<T> total = l_rec;
    if (cfg.l1_top > 0 || cfg.l1_bottom > 0) {
        if (cfg.l1_top == cfg.l1_bottom) {
            total = add(total, scale(l1_penalty(z), T(cfg.l1_top)));
        } else {
            total = add(total, scale(l1_penalty(slice(z, 1, 0, split)), T(cfg.l1_top)));
            total = add(total, scale(l1_penalty(slice(z, 1, split, bot)), T(cfg.l1_bottom)));
        }
    }
    if (cfg.corr_weight > 0 && B >= 2)
        total = add(total, scale(correlation_penalty(z, split), T(cfg.corr_weight)));

    // Certificate: bottom half only, stop-gradient into the encoding
    Tensor<T> cert_in = stop_gradient(slice(z, 1, split, bot));
    Tensor<T> cert_rec = mlp_forward(tape, m.params, "cert", m.cert_spec, cert_in);
    Tensor<T> l_cert = mae_loss(cert_rec, x.detached());
    SplitAeStepOut<T> out;
    out.rec = double(l_rec.scalar());
    out.cert = double(l_cert.scalar());
    out.total = add(total, l_cert);
    return out;
}

struct SplitAeReport {
    int preset_id = 0;
    uint64_t seed = 0;
    std::array<double, 10> cert_mae{}, dec_mae{};
    double cert_mae_04 = 0, cert_mae_59 = 0, dec_mae_04 = 0, dec_mae_59 = 0;
};

// Per-digit validation MAE for the Certificate and Decoder.
template <class T>
SplitAeReport evaluate_certificate(const SplitAeModels<T>& m, const MnistDataset& val,
                                   size_t eval_batch = 512) {
    const auto& cfg = m.cfg;
    std::array<double, 10> cert_sum{}, dec_sum{};
    std::array<size_t, 10> count{};
    size_t split = cfg.split, bot = cfg.encoding - split;

    for (size_t start = 0; start < val.n; start += eval_batch) {
        size_t B = std::min(eval_batch, val.n - start);
        std::vector<size_t> idx(B);
        for (size_t i = 0; i < B; ++i) idx[i] = start + i;
        Tape<T> tape;
        Tensor<T> x = tape.input(detail::batch_tensor<T>(val, idx));
        Tensor<T> z = mlp_forward(tape, m.params, "enc", m.enc_spec, x);
        Tensor<T> dec_rec = mlp_forward(tape, m.params, "dec", m.dec_spec, z);
        Tensor<T> cert_rec =
            mlp_forward(tape, m.params, "cert", m.cert_spec, slice(z, 1, split, bot));
        for (size_t i = 0; i < B; ++i) {
            int d = val.labels[start + i];
            double ce = 0, de = 0;
            for (size_t p = 0; p < 784; ++p) {
                double xv = double((*x.data)[i * 784 + p]);
                ce += std::abs(double((*cert_rec.data)[i * 784 + p]) - xv);
                de += std::abs(double((*dec_rec.data)[i * 784 + p]) - xv);
            }
            cert_sum[d] += ce / 784.0;
            dec_sum[d] += de / 784.0;
            ++count[d];
        }
    }
    SplitAeReport r;
    r.preset_id = cfg.preset_id;
    double c04 = 0, c59 = 0, d04 = 0, d59 = 0;
    size_t n04 = 0, n59 = 0;
    for (int d = 0; d < 10; ++d) {
        r.cert_mae[d] = count[d] ? cert_sum[d] / double(count[d]) : 0;
        r.dec_mae[d] = count[d] ? dec_sum[d] / double(count[d]) : 0;
        (d <= 4 ? c04 : c59) += cert_sum[d];
        (d <= 4 ? d04 : d59) += dec_sum[d];
        (d <= 4 ? n04 : n59) += count[d];
    }
    r.cert_mae_04 = c04 / double(std::max<size_t>(n04, 1));
    r.cert_mae_59 = c59 / double(std::max<size_t>(n59, 1));
    r.dec_mae_04 = d04 / double(std::max<size_t>(n04, 1));
    r.dec_mae_59 = d59 / double(std::max<size_t>(n59, 1));
    return r;
}

template <class T>
SplitAeReport train_split_autoencoder(const SplitAeConfig& cfg, const MnistDataset& train,
                                      const MnistDataset& val, uint64_t seed,
                                      MetricsWriter* metrics = nullptr,
                                      const std::string& run_id = "mnist",
                                      SplitAeModels<T>* out_models = nullptr) {
    Rng rng(seed);
    auto m = init_split_ae<T>(cfg, rng);

    std::vector<size_t> pool;
    size_t n = cfg.n_train && cfg.n_train < train.n ? cfg.n_train : train.n;
    for (size_t i = 0; i < n; ++i)
        if (!cfg.train_59_only || train.labels[i] >= 5) pool.push_back(i);
    if (pool.empty()) throw usage_error("train_split_autoencoder: empty training pool");

    AdamState<T> adam;
    adam.lr = T(cfg.lr);
    adam.weight_decay = T(cfg.weight_decay);

    size_t step = 0;
    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(pool);
        double ep_rec = 0, ep_cert = 0;
        size_t batches = 0;
        for (size_t start = 0; start + 1 < pool.size(); start += cfg.batch) {
            size_t B = std::min(cfg.batch, pool.size() - start);
            if (B < 2) break;
            std::vector<size_t> idx(pool.begin() + start, pool.begin() + start + B);
            std::vector<int> labels(B);
            for (size_t i = 0; i < B; ++i) labels[i] = train.labels[idx[i]];

            Tape<T> tape;
            Tensor<T> x = tape.input(detail::batch_tensor<T>(train, idx));
            auto out = split_ae_loss(tape, m, x, labels);
            auto grads = tape.backward(out.total);
            adam_step(adam, m.params, grads);
            ep_rec += out.rec;
            ep_cert += out.cert;
            ++batches;
            ++step;
        }
        if (metrics) {
            metrics->write(run_id, seed, step, "train_rec_mae", ep_rec / double(batches));
            metrics->write(run_id, seed, step, "train_cert_mae", ep_cert / double(batches));
        }
    }

    auto report = evaluate_certificate(m, val);
    report.seed = seed;
    if (metrics) {
        metrics->write(run_id, seed, step, "val_cert_mae_04", report.cert_mae_04);
        metrics->write(run_id, seed, step, "val_cert_mae_59", report.cert_mae_59);
        metrics->write(run_id, seed, step, "val_dec_mae_04", report.dec_mae_04);
        metrics->write(run_id, seed, step, "val_dec_mae_59", report.dec_mae_59);
        for (int d = 0; d < 10; ++d)
            metrics->write(run_id, seed, step, "val_cert_mae_digit" + std::to_string(d),
                           report.cert_mae[d]);
    }
    if (out_models) *out_models = m;
    return report;
}

// Reconstruction grid for visual inspection: original rows interleaved with
// Certificate reconstructions, written as a binary PGM.
template <class T>
void write_reconstruction_grid(const std::string& path, const SplitAeModels<T>& m,
                               const MnistDataset& val, size_t k = 10) {
    k = std::min(k, val.n);
    std::vector<size_t> idx(k);
    for (size_t i = 0; i < k; ++i) idx[i] = i;
    Tape<T> tape;
    Tensor<T> x = tape.input(detail::batch_tensor<T>(val, idx));
    Tensor<T> z = mlp_forward(tape, m.params, "enc", m.enc_spec, x);
    Tensor<T> cert =
        mlp_forward(tape, m.params, "cert", m.cert_spec,
                    slice(z, 1, m.cfg.split, m.cfg.encoding - m.cfg.split));

    size_t W = k * 28, H = 2 * 28;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("cannot write image grid " + path);
    out << "P5\n" << W << " " << H << "\n255\n";
    auto pix = [](double v) {
        double p = (v * 0.5 + 0.5) * 255.0;
        return static_cast<unsigned char>(std::clamp(p, 0.0, 255.0));
    };
    for (size_t row = 0; row < 28; ++row)
        for (size_t i = 0; i < k; ++i)
            for (size_t col = 0; col < 28; ++col) out.put(pix((*x.data)[i * 784 + row * 28 + col]));
    for (size_t row = 0; row < 28; ++row)
        for (size_t i = 0; i < k; ++i)
            for (size_t col = 0; col < 28; ++col)
                out.put(pix(double((*cert.data)[i * 784 + row * 28 + col])));
}

} // namespace gradroute
