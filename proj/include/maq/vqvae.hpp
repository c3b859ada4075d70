#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "maq/dataset.hpp"
#include "maq/net.hpp"
#include "maq/serialize.hpp"

namespace maq {

struct VQConfig {
    int horizon_h = 8;
    int codebook_k = 16;
    int latent_d = 32;
    double beta = 0.25;
    double learning_rate = 3e-4;
    int batch_size = 32;
    int epochs = 100;
    int hidden = 256;
    long seed = 1;
};

// Conditional VQVAE: encoder (state ⊕ macro) → latent, nearest codebook entry,
// decoder (state ⊕ code) → macro. All network IO is in normalized space.
struct CodebookModel {
    DenseNet encoder;
    DenseNet decoder;
    Mat embeddings;  // K x d
    int horizon_h = 0;
    int codebook_k = 0;
    int latent_d = 0;
    long seed = 0;
    NormStats norm_stats;

    int macro_dim() const { return kActionDim * horizon_h; }
};

struct VQLossParts {
    double reconstruction = 0.0;
    double codebook = 0.0;
    double commitment = 0.0;
    double total = 0.0;
    double beta = 0.0;
};

inline VQLossParts vq_loss(const Vec& m, const Vec& m_tilde, const Vec& e, const Vec& e_k, double beta) {
    if (m.size() != m_tilde.size() || e.size() != e_k.size()) throw UsageError("vq_loss: shape mismatch");
    VQLossParts parts;
    parts.beta = beta;
    parts.reconstruction = (m - m_tilde).squaredNorm();
    parts.codebook = (e - e_k).squaredNorm();
    parts.commitment = parts.codebook;  // same value; the two terms differ only in gradient routing
    parts.total = parts.reconstruction + parts.codebook + beta * parts.commitment;
    return parts;
}

struct QuantizeResult {
    int index = 0;
    Vec code;
};

inline QuantizeResult quantize(const CodebookModel& model, const Vec& e) {
    if (e.size() != model.latent_d) throw UsageError("quantize: latent dimension mismatch");
    int best = 0;
    double best_d = (model.embeddings.row(0).transpose() - e).squaredNorm();
    for (int k = 1; k < model.codebook_k; ++k) {
        const double d = (model.embeddings.row(k).transpose() - e).squaredNorm();
        if (d < best_d) {  // strict: ties keep the smallest index
            best_d = d;
            best = k;
        }
    }
    return {best, model.embeddings.row(best).transpose()};
}

namespace detail {

// Pre-normalized batched paths used by training and the sweep helpers.
inline Mat encoder_input(const CodebookModel& model, const Mat& states_z, const Mat& macros_z) {
    Mat in(states_z.rows(), kStateDim + model.macro_dim());
    in.leftCols(kStateDim) = states_z;
    in.rightCols(model.macro_dim()) = macros_z;
    return in;
}

inline Mat decoder_input(const CodebookModel& model, const Mat& states_z, const Mat& codes) {
    Mat in(states_z.rows(), kStateDim + model.latent_d);
    in.leftCols(kStateDim) = states_z;
    in.rightCols(model.latent_d) = codes;
    return in;
}

}  // namespace detail

inline Vec encode(const CodebookModel& model, const Eigen::Vector4d& state, const Eigen::VectorXd& macro) {
    if (macro.size() != model.macro_dim()) throw UsageError("encode: macro length != 3*H");
    Mat states_z(1, kStateDim);
    EnvState s;
    s.hand_x = state[0];
    s.hand_y = state[1];
    s.grip = state[2];
    s.door_angle = state[3];
    states_z.row(0) = model.norm_stats.normalize_state(s).transpose();
    Mat macros_z(1, model.macro_dim());
    macros_z.row(0) = model.norm_stats.normalize_macro(macro).transpose();
    return net_forward(model.encoder, detail::encoder_input(model, states_z, macros_z)).row(0).transpose();
}

inline Vec encode(const CodebookModel& model, const EnvState& state, const Eigen::VectorXd& macro) {
    const auto f = state.features();
    return encode(model, Eigen::Vector4d(f[0], f[1], f[2], f[3]), macro);
}

// Returns the macro in raw action units, each component clipped to [-1, 1].
inline Eigen::VectorXd decode(const CodebookModel& model, const Eigen::Vector4d& state, const Vec& code) {
    if (code.size() != model.latent_d) throw UsageError("decode: latent dimension mismatch");
    Mat states_z(1, kStateDim);
    EnvState s;
    s.hand_x = state[0];
    s.hand_y = state[1];
    s.grip = state[2];
    s.door_angle = state[3];
    states_z.row(0) = model.norm_stats.normalize_state(s).transpose();
    Mat codes(1, model.latent_d);
    codes.row(0) = code.transpose();
    const Mat out = net_forward(model.decoder, detail::decoder_input(model, states_z, codes));
    return model.norm_stats.denormalize_macro(out.row(0).transpose());
}

inline Eigen::VectorXd decode(const CodebookModel& model, const EnvState& state, const Vec& code) {
    const auto f = state.features();
    return decode(model, Eigen::Vector4d(f[0], f[1], f[2], f[3]), code);
}

inline double codebook_utilization(const CodebookModel& model, const std::vector<MacroSample>& samples) {
    if (samples.empty()) throw UsageError("codebook_utilization: no samples");
    std::vector<bool> used(model.codebook_k, false);
    for (const MacroSample& s : samples) used[quantize(model, encode(model, s.state, s.macro)).index] = true;
    int count = 0;
    for (bool u : used) count += u;
    return static_cast<double>(count) / static_cast<double>(model.codebook_k);
}

// Mean squared reconstruction error per scalar component, in raw action units
// (decode output is denormalized and clipped, matching how agents execute it).
inline double reconstruction_mse(const CodebookModel& model, const std::vector<MacroSample>& samples) {
    if (samples.empty()) throw UsageError("reconstruction_mse: no samples");
    double total = 0.0;
    std::size_t count = 0;
    for (const MacroSample& s : samples) {
        const Vec e = encode(model, s.state, s.macro);
        const QuantizeResult q = quantize(model, e);
        const Eigen::VectorXd rec = decode(model, s.state, q.code);
        total += (rec - s.macro).squaredNorm();
        count += static_cast<std::size_t>(s.macro.size());
    }
    return total / static_cast<double>(count);
}

struct VQTrainReport {
    VQConfig config;
    std::vector<VQLossParts> epoch_losses;
    double utilization = 0.0;
    double final_mse = 0.0;
    long revived_codes = 0;
    std::size_t sample_count = 0;
};

namespace detail {

// Adam over a bare matrix parameter (the codebook).
struct AdamMat {
    AdamState hyper;
    Mat m, v;

    AdamMat(const Mat& like, double lr) : m(Mat::Zero(like.rows(), like.cols())), v(Mat::Zero(like.rows(), like.cols())) {
        hyper.learning_rate = lr;
    }

    void step(Mat& param, const Mat& grad) {
        if (!grad.allFinite()) throw TrainError("adam matrix: non-finite gradient");
        hyper.step_count += 1;
        const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(hyper.step_count));
        const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(hyper.step_count));
        adam_update_flat(param.data(), grad.data(), m.data(), v.data(), param.size(), hyper, bc1, bc2);
    }

    void reset_row(Eigen::Index r) {
        m.row(r).setZero();
        v.row(r).setZero();
    }
};

}  // namespace detail

inline std::pair<CodebookModel, VQTrainReport> train_vqvae(const std::vector<Trajectory>& train,
                                                           const VQConfig& config) {
    if (train.empty()) throw ConfigError("train_vqvae: empty training set");
    if (config.horizon_h < 1) throw ConfigError("train_vqvae: H must be >= 1");
    std::size_t shortest = train.front().length();
    for (const Trajectory& t : train) shortest = std::min(shortest, t.length());
    if (static_cast<std::size_t>(config.horizon_h) > shortest)
        throw ConfigError("train_vqvae: H exceeds the shortest trajectory (" + std::to_string(shortest) + ")");
    if (config.codebook_k < 1 || config.latent_d < 1 || config.batch_size < 1 || config.epochs < 1 ||
        config.learning_rate <= 0.0 || config.hidden < 1)
        throw ConfigError("train_vqvae: invalid config");

    CodebookModel model;
    model.horizon_h = config.horizon_h;
    model.codebook_k = config.codebook_k;
    model.latent_d = config.latent_d;
    model.seed = config.seed;
    model.norm_stats = compute_norm_stats(train);

    const std::vector<MacroSample> samples = extract_macros(train, config.horizon_h);
    const int n = static_cast<int>(samples.size());
    const int macro_dim = kActionDim * config.horizon_h;

    Mat states_z(n, kStateDim), macros_z(n, macro_dim);
    for (int i = 0; i < n; ++i) {
        EnvState s;
        s.hand_x = samples[i].state[0];
        s.hand_y = samples[i].state[1];
        s.grip = samples[i].state[2];
        s.door_angle = samples[i].state[3];
        states_z.row(i) = model.norm_stats.normalize_state(s).transpose();
        macros_z.row(i) = model.norm_stats.normalize_macro(samples[i].macro).transpose();
    }

    Rng rng(mix_seed(static_cast<std::uint64_t>(config.seed), 0x50E1));
    model.encoder =
        make_dense_net({kStateDim + macro_dim, config.hidden, config.hidden, config.latent_d}, Act::relu,
                       Act::identity, rng);
    model.decoder = make_dense_net({kStateDim + config.latent_d, config.hidden, config.hidden, macro_dim}, Act::relu,
                                   Act::tanh, rng);

    // Data-dependent codebook init: encoder outputs of a random sample batch.
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    auto shuffle_order = [&] {
        for (int i = n - 1; i > 0; --i) std::swap(order[i], order[static_cast<int>(rng.uniform_int(i + 1))]);
    };
    shuffle_order();
    model.embeddings.resize(config.codebook_k, config.latent_d);
    for (int k = 0; k < config.codebook_k; ++k) {
        const int idx = n >= config.codebook_k ? order[k] : static_cast<int>(rng.uniform_int(n));
        const Mat in = detail::encoder_input(model, states_z.row(idx), macros_z.row(idx));
        model.embeddings.row(k) = net_forward(model.encoder, in).row(0);
    }

    AdamState enc_opt = AdamState::for_net(model.encoder, config.learning_rate);
    AdamState dec_opt = AdamState::for_net(model.decoder, config.learning_rate);
    detail::AdamMat cb_opt(model.embeddings, config.learning_rate);

    VQTrainReport report;
    report.config = config;
    report.sample_count = static_cast<std::size_t>(n);

    std::vector<long> usage(config.codebook_k, 0);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_order();
        std::fill(usage.begin(), usage.end(), 0L);
        VQLossParts epoch_mean;
        epoch_mean.beta = config.beta;
        int batch_count = 0;

        for (int start = 0; start < n; start += config.batch_size) {
            const int b = std::min(config.batch_size, n - start);
            Mat bs(b, kStateDim), bm(b, macro_dim);
            for (int i = 0; i < b; ++i) {
                bs.row(i) = states_z.row(order[start + i]);
                bm.row(i) = macros_z.row(order[start + i]);
            }

            ForwardCache enc_cache;
            const Mat latents = net_forward(model.encoder, detail::encoder_input(model, bs, bm), &enc_cache);

            Mat codes(b, config.latent_d);
            std::vector<int> assigned(b);
            for (int i = 0; i < b; ++i) {
                const QuantizeResult q = quantize(model, latents.row(i).transpose());
                assigned[i] = q.index;
                codes.row(i) = q.code.transpose();
                ++usage[q.index];
            }

            ForwardCache dec_cache;
            const Mat recon = net_forward(model.decoder, detail::decoder_input(model, bs, codes), &dec_cache);

            const double inv_b = 1.0 / static_cast<double>(b);
            const double rec_loss = (recon - bm).squaredNorm() * inv_b;
            const double cb_loss = (latents - codes).squaredNorm() * inv_b;
            const double total = rec_loss + cb_loss + config.beta * cb_loss;
            if (!std::isfinite(total))
                throw TrainError("train_vqvae: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(batch_count));
            if (std::abs(total - (rec_loss + cb_loss + config.beta * cb_loss)) > 1e-12)
                throw TrainError("train_vqvae: loss identity violated");

            // Reconstruction gradient through the decoder; its latent-slice
            // input gradient is the straight-through path back to the encoder.
            Mat dec_input_grad;
            const GradientSet dec_grads =
                net_backward(model.decoder, dec_cache, 2.0 * inv_b * (recon - bm), &dec_input_grad);
            const Mat straight_through = dec_input_grad.rightCols(config.latent_d);

            // Encoder sees the copied gradient plus the commitment pull.
            const Mat enc_out_grad = straight_through + (2.0 * config.beta * inv_b) * (latents - codes);
            const GradientSet enc_grads = net_backward(model.encoder, enc_cache, enc_out_grad);

            // Codebook term moves only the selected codes toward the latents.
            Mat cb_grad = Mat::Zero(config.codebook_k, config.latent_d);
            for (int i = 0; i < b; ++i)
                cb_grad.row(assigned[i]) += 2.0 * inv_b * (codes.row(i) - latents.row(i));

            adam_step(model.decoder, dec_grads, dec_opt);
            adam_step(model.encoder, enc_grads, enc_opt);
            cb_opt.step(model.embeddings, cb_grad);

            epoch_mean.reconstruction += rec_loss;
            epoch_mean.codebook += cb_loss;
            epoch_mean.commitment += cb_loss;
            epoch_mean.total += total;
            ++batch_count;
        }

        epoch_mean.reconstruction /= batch_count;
        epoch_mean.codebook /= batch_count;
        epoch_mean.commitment /= batch_count;
        epoch_mean.total /= batch_count;
        report.epoch_losses.push_back(epoch_mean);

        // Revive codes nothing selected this epoch, except after the final
        // epoch (training is over; a silent post-hoc edit would be dishonest).
        if (epoch + 1 < config.epochs) {
            for (int k = 0; k < config.codebook_k; ++k) {
                if (usage[k] > 0) continue;
                const int idx = static_cast<int>(rng.uniform_int(n));
                const Mat in = detail::encoder_input(model, states_z.row(idx), macros_z.row(idx));
                model.embeddings.row(k) = net_forward(model.encoder, in).row(0);
                cb_opt.reset_row(k);
                ++report.revived_codes;
            }
        }
    }

    report.utilization = codebook_utilization(model, samples);
    report.final_mse = reconstruction_mse(model, samples);
    return {std::move(model), std::move(report)};
}

// ---- MAQVQ v1 checkpoint -------------------------------------------------

inline void save_model(const CodebookModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("save_model: cannot open '" + path.string() + "' for writing");
    out << "MAQVQ v1\n";
    out << "meta H=" << model.horizon_h << " K=" << model.codebook_k << " d=" << model.latent_d
        << " seed=" << model.seed << "\n";
    out << "norm\n";
    write_vector_line(out, model.norm_stats.state_mean);
    write_vector_line(out, model.norm_stats.state_std);
    write_vector_line(out, model.norm_stats.action_mean);
    write_vector_line(out, model.norm_stats.action_std);
    write_net(out, "encoder", model.encoder);
    out << "embeddings " << model.codebook_k << ' ' << model.latent_d << '\n';
    write_matrix_lines(out, model.embeddings);
    write_net(out, "decoder", model.decoder);
    if (!out) throw ConfigError("save_model: write failed for '" + path.string() + "'");
}

inline CodebookModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("load_model: cannot open '" + path.string() + "'");
    std::string line = next_line(in, "header");
    if (trim(line) != "MAQVQ v1") {
        if (line.starts_with("MAQVQ")) throw ParseError("load_model: unsupported version '" + line + "'");
        throw ParseError("load_model: '" + path.string() + "' is not a MAQVQ checkpoint");
    }
    CodebookModel model;
    {
        const auto tok = split_ws(next_line(in, "meta"));
        if (tok.size() != 5 || tok[0] != "meta") throw ParseError("load_model: malformed meta record");
        model.horizon_h = static_cast<int>(parse_int(detail::expect_kv(tok[1], "H", "meta")));
        model.codebook_k = static_cast<int>(parse_int(detail::expect_kv(tok[2], "K", "meta")));
        model.latent_d = static_cast<int>(parse_int(detail::expect_kv(tok[3], "d", "meta")));
        model.seed = parse_int(detail::expect_kv(tok[4], "seed", "meta"));
    }
    if (trim(next_line(in, "norm")) != "norm") throw ParseError("load_model: expected norm record");
    model.norm_stats.state_mean = read_vector_line(in, kStateDim, "state_mean");
    model.norm_stats.state_std = read_vector_line(in, kStateDim, "state_std");
    model.norm_stats.action_mean = read_vector_line(in, kActionDim, "action_mean");
    model.norm_stats.action_std = read_vector_line(in, kActionDim, "action_std");
    model.encoder = read_net(in, "encoder");
    {
        const auto tok = split_ws(next_line(in, "embeddings"));
        if (tok.size() != 3 || tok[0] != "embeddings") throw ParseError("load_model: expected embeddings record");
        if (parse_int(tok[1]) != model.codebook_k || parse_int(tok[2]) != model.latent_d)
            throw ParseError("load_model: embeddings shape disagrees with meta");
        model.embeddings = read_matrix_lines(in, model.codebook_k, model.latent_d, "embeddings");
    }
    model.decoder = read_net(in, "decoder");

    if (model.encoder.out_dim() != model.latent_d || model.decoder.out_dim() != kActionDim * model.horizon_h ||
        model.encoder.in_dim() != kStateDim + kActionDim * model.horizon_h ||
        model.decoder.in_dim() != kStateDim + model.latent_d || !model.embeddings.allFinite())
        throw ParseError("load_model: inconsistent network shapes in checkpoint");
    return model;
}

// Guard used by pipeline stages that require a checkpoint trained for a
// specific configuration.
inline void require_model_shape(const CodebookModel& model, int horizon_h, int codebook_k) {
    if (model.horizon_h != horizon_h || model.codebook_k != codebook_k)
        throw ConfigError("checkpoint mismatch: model has H=" + std::to_string(model.horizon_h) +
                          " K=" + std::to_string(model.codebook_k) + ", run expects H=" + std::to_string(horizon_h) +
                          " K=" + std::to_string(codebook_k));
}

}  // namespace maq
