#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "maq/common.hpp"
#include "maq/dataset.hpp"
#include "maq/env.hpp"
#include "maq/net.hpp"
#include "maq/serialize.hpp"
#include "maq/smdp.hpp"
#include "maq/vqvae.hpp"

namespace maq {

struct DiscretePolicy {
    DenseNet net;  // state -> K logits
    int action_count = 0;
};

struct TwinCritic {
    DenseNet q1, q2;          // state -> K action values
    DenseNet q1_target, q2_target;
    double tau = 0.005;
};

struct SACConfig {
    double gamma = 0.99;
    int batch_size = 64;
    double actor_lr = 3e-4;
    double critic_lr = 3e-4;
    double alpha_lr = 3e-4;
    long warmup_decisions = 1000;
    long total_decisions = 20000;
    double target_entropy_fraction = 0.5;  // H_target = fraction * ln K
    long seed = 1;
    double symmetric_ratio = 0.0;  // 0 disables offline mixing
    long eval_interval = 500;
    int eval_episodes = 20;
    std::size_t replay_capacity = 100000;
    int hidden = 128;
    double tau = 0.005;
    double alpha_init = 1.0;
    // Grid warm-up only: hold each sampled action this many steps. Primitive
    // uniform exploration is diffusive and never reaches the latch; repeats
    // make it ballistic. Macro warm-up keeps one fresh code per decision.
    int warmup_action_repeat = 1;

    void validate() const {
        if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("SACConfig: gamma outside [0, 1)");
        if (batch_size < 1) throw ConfigError("SACConfig: batch size must be >= 1");
        if (total_decisions < 1) throw ConfigError("SACConfig: total decisions must be >= 1");
        if (warmup_decisions < batch_size) throw ConfigError("SACConfig: warm-up must cover at least one batch");
        if (symmetric_ratio < 0.0 || symmetric_ratio > 1.0) throw ConfigError("SACConfig: symmetric ratio outside [0, 1]");
        if (eval_interval < 1 || eval_episodes < 1) throw ConfigError("SACConfig: evaluation cadence invalid");
        if (actor_lr <= 0.0 || critic_lr <= 0.0 || alpha_lr <= 0.0 || hidden < 1 || replay_capacity == 0 ||
            alpha_init <= 0.0 || warmup_action_repeat < 1)
            throw ConfigError("SACConfig: invalid optimizer or capacity settings");
    }
};

// Temperature with its own optimizer state; alpha = exp(log_alpha).
struct AlphaState {
    double log_alpha = 0.0;
    AdamScalar opt;

    explicit AlphaState(double lr, double init = 1.0) : log_alpha(std::log(init)), opt(lr) {}
    double alpha() const { return std::exp(log_alpha); }
};

struct LossSummary {
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double entropy = 0.0;
    double alpha = 0.0;
};

struct CurvePoint {
    long macro_decisions = 0;
    long env_steps = 0;
    double eval_success = 0.0;
    double mean_return = 0.0;
    double alpha = 0.0;
    double actor_loss = 0.0;
    double critic_loss = 0.0;
};

struct EvalReport {
    double success_rate = 0.0;
    double mean_return = 0.0;
    std::vector<Trajectory> trajectories;  // primitive-level
    int episodes = 0;
    long seed = 0;
};

namespace detail {

inline Mat states_matrix(const std::vector<MacroTransition>& batch, bool next) {
    Mat out(static_cast<Eigen::Index>(batch.size()), kStateDim);
    for (std::size_t i = 0; i < batch.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = (next ? batch[i].next_state : batch[i].state).transpose();
    return out;
}

// Bellman targets: y = r + gamma^steps_elapsed * (1 - done) * E_k[min q_target - alpha log pi].
inline Eigen::VectorXd critic_targets(const DiscretePolicy& policy, const TwinCritic& critics,
                                      const std::vector<MacroTransition>& batch, double alpha, double gamma) {
    const Mat next_states = states_matrix(batch, true);
    const Mat logits = net_forward(policy.net, next_states);
    const Mat pi = softmax_rows(logits);
    const Mat log_pi = log_softmax_rows(logits);
    const Mat q1 = net_forward(critics.q1_target, next_states);
    const Mat q2 = net_forward(critics.q2_target, next_states);
    const Mat qmin = q1.cwiseMin(q2);

    Eigen::VectorXd y(static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double v_next = (pi.row(r).array() * (qmin.row(r).array() - alpha * log_pi.row(r).array())).sum();
        const double scale = batch[i].done ? 0.0 : std::pow(gamma, batch[i].steps_elapsed);
        y[r] = batch[i].macro_reward + scale * v_next;
    }
    return y;
}

struct CriticGradients {
    GradientSet q1, q2;
    double loss = 0.0;
};

inline CriticGradients critic_gradients(const TwinCritic& critics, const std::vector<MacroTransition>& batch,
                                        const Eigen::VectorXd& y) {
    const Mat states = states_matrix(batch, false);
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    CriticGradients out;
    ForwardCache c1, c2;
    const Mat q1 = net_forward(critics.q1, states, &c1);
    const Mat q2 = net_forward(critics.q2, states, &c2);
    Mat g1 = Mat::Zero(q1.rows(), q1.cols());
    Mat g2 = Mat::Zero(q2.rows(), q2.cols());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const int a = batch[i].code_index;
        const double d1 = q1(r, a) - y[r];
        const double d2 = q2(r, a) - y[r];
        out.loss += inv_b * (d1 * d1 + d2 * d2);
        g1(r, a) = 2.0 * inv_b * d1;
        g2(r, a) = 2.0 * inv_b * d2;
    }
    out.q1 = net_backward(critics.q1, c1, g1);
    out.q2 = net_backward(critics.q2, c2, g2);
    return out;
}

struct ActorGradients {
    GradientSet policy;
    double loss = 0.0;
    double entropy = 0.0;
};

// Exact-expectation actor objective: E_k[ alpha*log pi - min q ], critics
// detached. d/dlogit_j = pi_j * (g_j - E[g]) with g = alpha*log pi - qmin.
inline ActorGradients actor_gradients(const DiscretePolicy& policy, const TwinCritic& critics,
                                      const std::vector<MacroTransition>& batch, double alpha) {
    const Mat states = states_matrix(batch, false);
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    ForwardCache cache;
    const Mat logits = net_forward(policy.net, states, &cache);
    const Mat pi = softmax_rows(logits);
    const Mat log_pi = log_softmax_rows(logits);
    const Mat qmin = net_forward(critics.q1, states).cwiseMin(net_forward(critics.q2, states));

    ActorGradients out;
    Mat grad = Mat::Zero(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const auto g = (alpha * log_pi.row(r).array() - qmin.row(r).array()).eval();
        const double row_loss = (pi.row(r).array() * g).sum();
        out.loss += inv_b * row_loss;
        out.entropy -= inv_b * (pi.row(r).array() * log_pi.row(r).array()).sum();
        grad.row(r) = inv_b * (pi.row(r).array() * (g - row_loss)).matrix();
    }
    out.policy = net_backward(policy.net, cache, grad);
    return out;
}

inline void polyak_update(DenseNet& target, const DenseNet& online, double tau) {
    for (std::size_t l = 0; l < online.weights.size(); ++l) {
        target.weights[l] = (1.0 - tau) * target.weights[l] + tau * online.weights[l];
        target.biases[l] = (1.0 - tau) * target.biases[l] + tau * online.biases[l];
    }
}

}  // namespace detail

struct AgentOptimizers {
    AdamState actor;
    AdamState critic1;
    AdamState critic2;

    AgentOptimizers(const DiscretePolicy& policy, const TwinCritic& critics, const SACConfig& config)
        : actor(AdamState::for_net(policy.net, config.actor_lr)),
          critic1(AdamState::for_net(critics.q1, config.critic_lr)),
          critic2(AdamState::for_net(critics.q2, config.critic_lr)) {}
};

inline LossSummary dsac_update(DiscretePolicy& policy, TwinCritic& critics, const std::vector<MacroTransition>& batch,
                               AlphaState& alpha_state, AgentOptimizers& opt, const SACConfig& config) {
    if (batch.empty()) throw UsageError("dsac_update: empty batch");
    const double alpha = alpha_state.alpha();

    const Eigen::VectorXd y = detail::critic_targets(policy, critics, batch, alpha, config.gamma);
    const detail::CriticGradients cg = detail::critic_gradients(critics, batch, y);
    if (!std::isfinite(cg.loss))
        throw TrainError("dsac_update: non-finite critic loss on a batch of " + std::to_string(batch.size()));
    adam_step(critics.q1, cg.q1, opt.critic1);
    adam_step(critics.q2, cg.q2, opt.critic2);

    const detail::ActorGradients ag = detail::actor_gradients(policy, critics, batch, alpha);
    if (!std::isfinite(ag.loss))
        throw TrainError("dsac_update: non-finite actor loss on a batch of " + std::to_string(batch.size()));
    adam_step(policy.net, ag.policy, opt.actor);

    const double target_entropy = config.target_entropy_fraction * std::log(static_cast<double>(policy.action_count));
    alpha_state.opt.step(alpha_state.log_alpha, alpha * (ag.entropy - target_entropy));

    detail::polyak_update(critics.q1_target, critics.q1, critics.tau);
    detail::polyak_update(critics.q2_target, critics.q2, critics.tau);

    LossSummary s;
    s.critic_loss = cg.loss;
    s.actor_loss = ag.loss;
    s.entropy = ag.entropy;
    s.alpha = alpha_state.alpha();
    return s;
}

inline DiscretePolicy make_policy(int action_count, int hidden, Rng& rng) {
    DiscretePolicy p;
    p.action_count = action_count;
    p.net = make_dense_net({kStateDim, hidden, hidden, action_count}, Act::relu, Act::identity, rng);
    return p;
}

inline TwinCritic make_critics(int action_count, int hidden, double tau, Rng& rng) {
    TwinCritic c;
    c.q1 = make_dense_net({kStateDim, hidden, hidden, action_count}, Act::relu, Act::identity, rng);
    c.q2 = make_dense_net({kStateDim, hidden, hidden, action_count}, Act::relu, Act::identity, rng);
    c.q1_target = c.q1;
    c.q2_target = c.q2;
    c.tau = tau;
    return c;
}

inline int greedy_action(const DiscretePolicy& policy, const Eigen::Vector4d& state) {
    Mat s(1, kStateDim);
    s.row(0) = state.transpose();
    const Mat logits = net_forward(policy.net, s);
    Eigen::Index best = 0;
    logits.row(0).maxCoeff(&best);
    return static_cast<int>(best);
}

// The 27 coarse primitive actions, row-major over {-1,0,1}^3:
// index = (ax+1)*9 + (ay+1)*3 + (ag+1).
inline PrimitiveAction grid_action(int index) {
    if (index < 0 || index >= 27) throw UsageError("grid_action: index out of range");
    const double ax = static_cast<double>(index / 9 - 1);
    const double ay = static_cast<double>((index / 3) % 3 - 1);
    const double ag = static_cast<double>(index % 3 - 1);
    return {ax, ay, ag};
}

// Greedy rollouts with per-episode seeded resets; trajectories keep the
// primitive-level actions for the similarity module.
inline EvalReport evaluate_maq(const LatchDoorEnv& env, const DiscretePolicy& policy, const CodebookModel& model,
                               int episodes, long seed, double gamma) {
    if (episodes < 1) throw UsageError("evaluate: episodes must be >= 1");
    EvalReport report;
    report.episodes = episodes;
    report.seed = seed;
    for (int ep = 0; ep < episodes; ++ep) {
        const long reset_seed = static_cast<long>(mix_seed(static_cast<std::uint64_t>(seed), static_cast<std::uint64_t>(ep)));
        EnvState s = env.reset(reset_seed);
        Trajectory traj;
        traj.states.push_back(s);
        traj.seed = reset_seed;
        traj.source = TrajectorySource::agent;
        while (!env.is_done(s)) {
            const int code = greedy_action(policy, detail::state_features(s));
            const auto [tr, frag] = macro_step(env, s, code, model, gamma);
            for (std::size_t i = 0; i < frag.actions.size(); ++i) {
                traj.actions.push_back(frag.actions[i]);
                traj.rewards.push_back(frag.rewards[i]);
                traj.states.push_back(frag.states[i + 1]);
            }
            s = frag.states.back();
        }
        traj.success = s.door_angle >= env.goal_angle;
        report.success_rate += traj.success ? 1.0 : 0.0;
        report.mean_return += traj.total_reward();
        report.trajectories.push_back(std::move(traj));
    }
    report.success_rate /= episodes;
    report.mean_return /= episodes;
    return report;
}

inline EvalReport evaluate_grid(const LatchDoorEnv& env, const DiscretePolicy& policy, int episodes, long seed) {
    if (episodes < 1) throw UsageError("evaluate: episodes must be >= 1");
    EvalReport report;
    report.episodes = episodes;
    report.seed = seed;
    for (int ep = 0; ep < episodes; ++ep) {
        const long reset_seed = static_cast<long>(mix_seed(static_cast<std::uint64_t>(seed), static_cast<std::uint64_t>(ep)));
        EnvState s = env.reset(reset_seed);
        Trajectory traj;
        traj.states.push_back(s);
        traj.seed = reset_seed;
        traj.source = TrajectorySource::agent;
        while (!env.is_done(s)) {
            const PrimitiveAction a = grid_action(greedy_action(policy, detail::state_features(s)));
            const StepResult r = env.step(s, a);
            traj.actions.push_back(a);
            traj.rewards.push_back(r.reward);
            traj.states.push_back(r.next);
            s = r.next;
        }
        traj.success = s.door_angle >= env.goal_angle;
        report.success_rate += traj.success ? 1.0 : 0.0;
        report.mean_return += traj.total_reward();
        report.trajectories.push_back(std::move(traj));
    }
    report.success_rate /= episodes;
    report.mean_return /= episodes;
    return report;
}

// One learning-curve layer shared by the MAQ agent and the grid baseline.
namespace detail {

template <typename CollectStep, typename Evaluate>
std::vector<CurvePoint> dsac_training_loop(DiscretePolicy& policy, TwinCritic& critics, const SACConfig& config,
                                           const std::vector<MacroTransition>& offline, CollectStep&& collect,
                                           Evaluate&& evaluate) {
    config.validate();
    if (config.symmetric_ratio > 0.0 && offline.empty())
        throw ConfigError("training: symmetric ratio set but no offline transitions supplied");

    Rng rng(mix_seed(static_cast<std::uint64_t>(config.seed), 0xA6E7));
    ReplayBuffer buffer(config.replay_capacity, static_cast<long>(mix_seed(static_cast<std::uint64_t>(config.seed), 0xBFFA)));
    AgentOptimizers opt(policy, critics, config);
    AlphaState alpha_state(config.alpha_lr, config.alpha_init);

    std::vector<CurvePoint> curve;
    LossSummary last;
    last.alpha = alpha_state.alpha();
    long env_steps = 0;

    // The returned policy is the best evaluation checkpoint (first one on
    // ties), not whatever the final update left behind.
    DenseNet best_net = policy.net;
    double best_success = -1.0;

    for (long decision = 0; decision < config.total_decisions; ++decision) {
        env_steps += collect(decision < config.warmup_decisions, rng, buffer);

        if (decision >= config.warmup_decisions) {
            const std::vector<MacroTransition> batch =
                config.symmetric_ratio > 0.0
                    ? buffer.symmetric_sample(offline, static_cast<std::size_t>(config.batch_size), config.symmetric_ratio)
                    : buffer.sample(static_cast<std::size_t>(config.batch_size));
            last = dsac_update(policy, critics, batch, alpha_state, opt, config);
        }

        if ((decision + 1) % config.eval_interval == 0) {
            const EvalReport report = evaluate(decision + 1);
            CurvePoint pt;
            pt.macro_decisions = decision + 1;
            pt.env_steps = env_steps;
            pt.eval_success = report.success_rate;
            pt.mean_return = report.mean_return;
            pt.alpha = last.alpha;
            pt.actor_loss = last.actor_loss;
            pt.critic_loss = last.critic_loss;
            curve.push_back(pt);
            if (report.success_rate > best_success) {
                best_success = report.success_rate;
                best_net = policy.net;
            }
        }
    }
    if (best_success >= 0.0) policy.net = best_net;
    return curve;
}

}  // namespace detail

// MAQ+DSAC: codes from the frozen codebook drive commit-and-replan macro
// steps; symmetric_ratio > 0 mixes offline demo transitions into every batch.
inline std::pair<DiscretePolicy, std::vector<CurvePoint>> train_maq_agent(const LatchDoorEnv& env,
                                                                          const CodebookModel& model,
                                                                          const std::vector<MacroTransition>& offline,
                                                                          const SACConfig& config) {
    Rng init_rng(mix_seed(static_cast<std::uint64_t>(config.seed), 0x9071));
    DiscretePolicy policy = make_policy(model.codebook_k, config.hidden, init_rng);
    TwinCritic critics = make_critics(model.codebook_k, config.hidden, config.tau, init_rng);

    EnvState s;
    long episode = 0;
    bool need_reset = true;

    auto collect = [&](bool warmup, Rng& rng, ReplayBuffer& buffer) -> long {
        if (need_reset) {
            s = env.reset(static_cast<long>(mix_seed(mix_seed(static_cast<std::uint64_t>(config.seed), 0x7A17), static_cast<std::uint64_t>(episode))));
            ++episode;
            need_reset = false;
        }
        int code;
        if (warmup) {
            code = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(model.codebook_k)));
        } else {
            Mat sm(1, kStateDim);
            sm.row(0) = detail::state_features(s).transpose();
            code = static_cast<int>(sample_categorical(net_forward(policy.net, sm).row(0).transpose(), rng).index);
        }
        const auto [tr, frag] = macro_step(env, s, code, model, config.gamma);
        buffer.push(tr);
        s = frag.states.back();
        if (tr.done) need_reset = true;
        return tr.steps_elapsed;
    };

    auto eval = [&](long decisions_done) {
        return evaluate_maq(env, policy, model, config.eval_episodes,
                            static_cast<long>(mix_seed(mix_seed(static_cast<std::uint64_t>(config.seed), 0xEA11), static_cast<std::uint64_t>(decisions_done))),
                            config.gamma);
    };

    std::vector<CurvePoint> curve = detail::dsac_training_loop(policy, critics, config, offline, collect, eval);
    return {std::move(policy), std::move(curve)};
}

// Grid baseline: identical machinery, horizon-1 decisions over the 27 coarse
// primitive actions, no demonstrations.
inline std::pair<DiscretePolicy, std::vector<CurvePoint>> train_grid_baseline(const LatchDoorEnv& env,
                                                                              const SACConfig& config) {
    Rng init_rng(mix_seed(static_cast<std::uint64_t>(config.seed), 0x9072));
    DiscretePolicy policy = make_policy(27, config.hidden, init_rng);
    TwinCritic critics = make_critics(27, config.hidden, config.tau, init_rng);

    EnvState s;
    long episode = 0;
    bool need_reset = true;
    int sticky_idx = 0;
    int sticky_left = 0;

    auto collect = [&](bool warmup, Rng& rng, ReplayBuffer& buffer) -> long {
        if (need_reset) {
            s = env.reset(static_cast<long>(mix_seed(mix_seed(static_cast<std::uint64_t>(config.seed), 0x7A17), static_cast<std::uint64_t>(episode))));
            ++episode;
            need_reset = false;
            sticky_left = 0;
        }
        int idx;
        if (warmup) {
            if (sticky_left == 0) {
                sticky_idx = static_cast<int>(rng.uniform_int(27));
                sticky_left = config.warmup_action_repeat;
            }
            idx = sticky_idx;
            --sticky_left;
        } else {
            Mat sm(1, kStateDim);
            sm.row(0) = detail::state_features(s).transpose();
            idx = static_cast<int>(sample_categorical(net_forward(policy.net, sm).row(0).transpose(), rng).index);
        }
        MacroTransition tr;
        tr.state = detail::state_features(s);
        tr.code_index = idx;
        const StepResult r = env.step(s, grid_action(idx));
        tr.macro_reward = r.reward;
        tr.next_state = detail::state_features(r.next);
        tr.done = r.done;
        tr.steps_elapsed = 1;
        tr.origin = TransitionOrigin::online;
        buffer.push(tr);
        s = r.next;
        if (r.done) need_reset = true;
        return 1;
    };

    auto eval = [&](long decisions_done) {
        return evaluate_grid(env, policy, config.eval_episodes,
                             static_cast<long>(mix_seed(mix_seed(static_cast<std::uint64_t>(config.seed), 0xEA11), static_cast<std::uint64_t>(decisions_done))));
    };

    std::vector<CurvePoint> curve = detail::dsac_training_loop(policy, critics, config, {}, collect, eval);
    return {std::move(policy), std::move(curve)};
}

// ---- Behavior cloning ------------------------------------------------------

struct BCConfig {
    int epochs = 100;
    int batch_size = 64;
    double learning_rate = 3e-4;
    int hidden = 128;
    long seed = 1;
};

struct BCPolicy {
    DenseNet net;  // state -> 3 action components, tanh
};

inline BCPolicy train_bc(const std::vector<Trajectory>& train, const BCConfig& config) {
    if (train.empty()) throw ConfigError("train_bc: empty training set");
    if (config.epochs < 1 || config.batch_size < 1 || config.learning_rate <= 0.0)
        throw ConfigError("train_bc: invalid config");

    std::size_t total = 0;
    for (const Trajectory& t : train) total += t.length();
    Mat states(static_cast<Eigen::Index>(total), kStateDim), actions(static_cast<Eigen::Index>(total), kActionDim);
    Eigen::Index row = 0;
    for (const Trajectory& t : train)
        for (std::size_t i = 0; i < t.length(); ++i, ++row) {
            const auto f = t.states[i].features();
            const auto a = t.actions[i].components();
            for (int j = 0; j < kStateDim; ++j) states(row, j) = f[j];
            for (int j = 0; j < kActionDim; ++j) actions(row, j) = a[j];
        }

    Rng rng(mix_seed(static_cast<std::uint64_t>(config.seed), 0xBC01));
    BCPolicy policy;
    policy.net = make_dense_net({kStateDim, config.hidden, config.hidden, kActionDim}, Act::relu, Act::tanh, rng);
    AdamState opt = AdamState::for_net(policy.net, config.learning_rate);

    const int n = static_cast<int>(total);
    std::vector<int> order(total);
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (int i = n - 1; i > 0; --i)
            std::swap(order[static_cast<std::size_t>(i)], order[rng.uniform_int(static_cast<std::uint64_t>(i + 1))]);
        for (int start = 0; start < n; start += config.batch_size) {
            const int b = std::min(config.batch_size, n - start);
            Mat bs(b, kStateDim), ba(b, kActionDim);
            for (int i = 0; i < b; ++i) {
                bs.row(i) = states.row(order[static_cast<std::size_t>(start + i)]);
                ba.row(i) = actions.row(order[static_cast<std::size_t>(start + i)]);
            }
            ForwardCache cache;
            const Mat pred = net_forward(policy.net, bs, &cache);
            const double loss = (pred - ba).squaredNorm() / b;
            if (!std::isfinite(loss))
                throw TrainError("train_bc: non-finite loss at epoch " + std::to_string(epoch));
            const GradientSet grads = net_backward(policy.net, cache, 2.0 / b * (pred - ba));
            adam_step(policy.net, grads, opt);
        }
    }
    return policy;
}

inline PrimitiveAction bc_action(const BCPolicy& policy, const EnvState& state) {
    Mat s(1, kStateDim);
    const auto f = state.features();
    for (int j = 0; j < kStateDim; ++j) s(0, j) = f[j];
    const Mat out = net_forward(policy.net, s);
    return {out(0, 0), out(0, 1), out(0, 2)};
}

inline EvalReport evaluate_bc(const LatchDoorEnv& env, const BCPolicy& policy, int episodes, long seed) {
    if (episodes < 1) throw UsageError("evaluate: episodes must be >= 1");
    EvalReport report;
    report.episodes = episodes;
    report.seed = seed;
    for (int ep = 0; ep < episodes; ++ep) {
        const long reset_seed = static_cast<long>(mix_seed(static_cast<std::uint64_t>(seed), static_cast<std::uint64_t>(ep)));
        EnvState s = env.reset(reset_seed);
        Trajectory traj;
        traj.states.push_back(s);
        traj.seed = reset_seed;
        traj.source = TrajectorySource::agent;
        while (!env.is_done(s)) {
            const PrimitiveAction a = bc_action(policy, s);
            const StepResult r = env.step(s, a);
            traj.actions.push_back(a);
            traj.rewards.push_back(r.reward);
            traj.states.push_back(r.next);
            s = r.next;
        }
        traj.success = s.door_angle >= env.goal_angle;
        report.success_rate += traj.success ? 1.0 : 0.0;
        report.mean_return += traj.total_reward();
        report.trajectories.push_back(std::move(traj));
    }
    report.success_rate /= episodes;
    report.mean_return /= episodes;
    return report;
}

// ---- Persistence -----------------------------------------------------------

inline void write_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("write_curve_csv: cannot open '" + path.string() + "'");
    out << "macro_decisions,env_steps,eval_success,mean_return,alpha,actor_loss,critic_loss\n";
    for (const CurvePoint& p : curve)
        out << p.macro_decisions << ',' << p.env_steps << ',' << fmt_real(p.eval_success) << ','
            << fmt_real(p.mean_return) << ',' << fmt_real(p.alpha) << ',' << fmt_real(p.actor_loss) << ','
            << fmt_real(p.critic_loss) << '\n';
    if (!out) throw ConfigError("write_curve_csv: write failed for '" + path.string() + "'");
}

// MAQPOL v1: policy checkpoint. kind is "maq", "grid", or "bc"; actions is
// the logit count (grid: 27, bc: 3 regression outputs).
inline void save_policy(const DenseNet& net, const std::string& kind, int actions, long seed,
                        const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("save_policy: cannot open '" + path.string() + "' for writing");
    out << "MAQPOL v1\n";
    out << "meta kind=" << kind << " actions=" << actions << " seed=" << seed << "\n";
    write_net(out, "policy", net);
    if (!out) throw ConfigError("save_policy: write failed for '" + path.string() + "'");
}

struct PolicyCheckpoint {
    DenseNet net;
    std::string kind;
    int actions = 0;
    long seed = 0;
};

inline PolicyCheckpoint load_policy(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("load_policy: cannot open '" + path.string() + "'");
    std::string line = next_line(in, "header");
    if (trim(line) != "MAQPOL v1") {
        if (line.starts_with("MAQPOL")) throw ParseError("load_policy: unsupported version '" + line + "'");
        throw ParseError("load_policy: '" + path.string() + "' is not a MAQPOL checkpoint");
    }
    PolicyCheckpoint ckpt;
    {
        const auto tok = split_ws(next_line(in, "meta"));
        if (tok.size() != 4 || tok[0] != "meta") throw ParseError("load_policy: malformed meta record");
        ckpt.kind = detail::expect_kv(tok[1], "kind", "meta");
        ckpt.actions = static_cast<int>(parse_int(detail::expect_kv(tok[2], "actions", "meta")));
        ckpt.seed = parse_int(detail::expect_kv(tok[3], "seed", "meta"));
    }
    ckpt.net = read_net(in, "policy");
    if (ckpt.net.out_dim() != ckpt.actions || ckpt.net.in_dim() != kStateDim)
        throw ParseError("load_policy: network shape disagrees with meta");
    return ckpt;
}

}  // namespace maq
