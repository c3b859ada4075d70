#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "maq/common.hpp"
#include "maq/env.hpp"
#include "maq/vqvae.hpp"

namespace maq {

enum class TransitionOrigin { online, offline };

// One macro-level SMDP step: a code committed at `state`, executed for
// steps_elapsed primitive steps (the full horizon unless the episode ended
// mid-macro), with the within-segment discounted reward.
struct MacroTransition {
    Eigen::Vector4d state;
    int code_index = 0;
    double macro_reward = 0.0;
    Eigen::Vector4d next_state;
    bool done = false;
    int steps_elapsed = 0;
    TransitionOrigin origin = TransitionOrigin::online;
};

namespace detail {

inline Eigen::Vector4d state_features(const EnvState& s) {
    const auto f = s.features();
    return {f[0], f[1], f[2], f[3]};
}

}  // namespace detail

// Decodes the code conditioned on the current state and commits to the whole
// segment: execute every primitive action in order, replan only afterwards.
// The returned fragment carries the primitive-level slice for similarity
// metrics; its states chain exactly through env.step.
inline std::pair<MacroTransition, Trajectory> macro_step(const LatchDoorEnv& env, const EnvState& state,
                                                         int code_index, const CodebookModel& model, double gamma) {
    if (env.is_done(state)) throw UsageError("macro_step: episode already done");
    if (code_index < 0 || code_index >= model.codebook_k) throw UsageError("macro_step: code index out of range");

    const Eigen::VectorXd macro =
        decode(model, state, model.embeddings.row(code_index).transpose());

    MacroTransition tr;
    tr.state = detail::state_features(state);
    tr.code_index = code_index;
    tr.origin = TransitionOrigin::online;

    Trajectory frag;
    frag.states.push_back(state);
    frag.source = TrajectorySource::agent;

    EnvState s = state;
    double discount = 1.0;
    for (int i = 0; i < model.horizon_h; ++i) {
        PrimitiveAction a{macro[3 * i], macro[3 * i + 1], macro[3 * i + 2]};
        const StepResult r = env.step(s, a);
        frag.actions.push_back(a);
        frag.rewards.push_back(r.reward);
        frag.states.push_back(r.next);
        tr.macro_reward += discount * r.reward;
        discount *= gamma;
        s = r.next;
        ++tr.steps_elapsed;
        if (r.done) break;
    }

    tr.next_state = detail::state_features(s);
    tr.done = env.is_done(s);
    frag.success = s.door_angle >= env.goal_angle;
    return {std::move(tr), std::move(frag)};
}

// Non-overlapping stride-H windows over a demo, so offline transitions live
// on the same SMDP timescale as online ones. Codes come from quantizing the
// demo's own (state, macro) pair; rewards are re-discounted from the recorded
// step rewards.
inline std::vector<MacroTransition> demo_to_macro_transitions(const LatchDoorEnv& env, const Trajectory& demo,
                                                              const CodebookModel& model, double gamma) {
    const int h = model.horizon_h;
    const std::size_t len = demo.length();
    if (len < static_cast<std::size_t>(h))
        throw UsageError("demo_to_macro_transitions: demo length " + std::to_string(len) +
                         " is shorter than the macro horizon " + std::to_string(h));

    std::vector<MacroTransition> out;
    out.reserve(len / static_cast<std::size_t>(h));
    for (std::size_t t = 0; t + static_cast<std::size_t>(h) <= len; t += static_cast<std::size_t>(h)) {
        Eigen::VectorXd macro(3 * h);
        for (int i = 0; i < h; ++i) {
            const auto c = demo.actions[t + static_cast<std::size_t>(i)].components();
            macro[3 * i] = c[0];
            macro[3 * i + 1] = c[1];
            macro[3 * i + 2] = c[2];
        }

        MacroTransition tr;
        tr.state = detail::state_features(demo.states[t]);
        tr.code_index = quantize(model, encode(model, tr.state, macro)).index;
        double discount = 1.0;
        for (int i = 0; i < h; ++i) {
            tr.macro_reward += discount * demo.rewards[t + static_cast<std::size_t>(i)];
            discount *= gamma;
        }
        const std::size_t end = t + static_cast<std::size_t>(h);
        tr.next_state = detail::state_features(demo.states[end]);
        tr.done = env.is_done(demo.states[end]);
        tr.steps_elapsed = h;
        tr.origin = TransitionOrigin::offline;
        out.push_back(std::move(tr));
    }
    return out;
}

// Bounded ring with seeded uniform-with-replacement sampling. Single writer;
// sampling advances the buffer's own stream so fixed seed + fixed call order
// reproduces batches exactly.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, long seed)
        : capacity_(capacity), rng_(mix_seed(static_cast<std::uint64_t>(seed), 0xB0FF)) {
        if (capacity == 0) throw ConfigError("ReplayBuffer: capacity must be positive");
        data_.reserve(capacity);
    }

    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::uint64_t total_pushed() const { return pushed_; }

    void push(const MacroTransition& tr) {
        if (data_.size() < capacity_) {
            data_.push_back(tr);
        } else {
            data_[next_] = tr;  // oldest slot: ring order equals insert order
        }
        next_ = (next_ + 1) % capacity_;
        ++pushed_;
    }

    std::vector<MacroTransition> sample(std::size_t n) {
        if (data_.empty()) throw UsageError("ReplayBuffer: sample from empty buffer");
        if (n > data_.size()) throw UsageError("ReplayBuffer: batch larger than contents");
        std::vector<MacroTransition> batch;
        batch.reserve(n);
        for (std::size_t i = 0; i < n; ++i) batch.push_back(data_[rng_.uniform_int(data_.size())]);
        return batch;
    }

    // round(ratio·n) offline draws + remainder online, shuffled together on
    // this buffer's stream.
    std::vector<MacroTransition> symmetric_sample(const std::vector<MacroTransition>& offline, std::size_t n,
                                                  double ratio) {
        if (ratio < 0.0 || ratio > 1.0) throw UsageError("symmetric_sample: ratio outside [0, 1]");
        const std::size_t k = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(n)));
        if (k > 0 && offline.empty()) throw UsageError("symmetric_sample: offline source is empty");

        std::vector<MacroTransition> batch = n > k ? sample(n - k) : std::vector<MacroTransition>{};
        for (std::size_t i = 0; i < k; ++i) batch.push_back(offline[rng_.uniform_int(offline.size())]);
        for (std::size_t i = batch.size(); i > 1; --i)
            std::swap(batch[i - 1], batch[rng_.uniform_int(i)]);
        return batch;
    }

private:
    std::size_t capacity_ = 0;
    std::size_t next_ = 0;
    std::uint64_t pushed_ = 0;
    std::vector<MacroTransition> data_;
    Rng rng_;
};

}  // namespace maq
