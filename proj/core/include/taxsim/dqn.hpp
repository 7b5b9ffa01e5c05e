#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "taxsim/llm.hpp"
#include "taxsim/money.hpp"
#include "taxsim/rng.hpp"

namespace taxsim {

// Feature layout of the encoded decision state. Normalizers fall back to 1
// when a salary is zero.
inline constexpr int kStateDim = 15;
using StateVector = std::vector<double>;

StateVector encode_state(const DecisionContext& ctx, const LlmSuggestion& suggestion);

struct Transition {
    StateVector state;
    int action = 0;
    double reward = 0.0;
    StateVector next_state;
    bool terminal = false;
};

struct DqnConfig {
    std::vector<int> hidden_layers{64, 64};  // rectifier nonlinearity
    double learning_rate = 1e-3;
    std::size_t replay_capacity = 10000;
    std::size_t batch = 64;
    long target_sync_every = 250;  // updates between target-network copies
    double epsilon_min = 0.01;
    double epsilon_max = 0.5;
    double zeta = 0.0;      // exploration trait; epsilon = min + (max-min)*zeta
    double gamma = 0.95;    // from gamma_from_eta(eta)
    double noise_std = 0.0; // 1 - upsilon
    int payment_levels = 10;  // K; actions pay i/K of owed, i in 0..K
    // Initial Q ridge that makes the untrained greedy action imitate the
    // suggested payment fraction; training washes it out. 0 disables.
    double suggestion_prior = 2.0;
    std::uint64_t seed = 0;

    int num_actions() const { return payment_levels + 1; }
    double epsilon() const { return epsilon_min + (epsilon_max - epsilon_min) * zeta; }
};

// Discount factor such that rewards beyond eta+1 steps contribute at most
// one percent: gamma = 0.01^(1/(eta+1)).
double gamma_from_eta(long eta);

// r plus zero-mean gaussian noise with std 1-upsilon (bounded rationality).
double noisy_reward(double r, double upsilon, Rng& rng);

// R = U - psi - C: public-goods utility minus audit penalties minus money
// spent (taxes paid plus purchase outlays) since the previous decision.
double compute_reward(double utility, Money penalty, Money cost);

// Dense network with rectifier hidden units, plain SGD on MSE.
class Mlp {
public:
    struct Layer {
        int in = 0, out = 0;
        std::vector<double> w;  // row-major [out][in]
        std::vector<double> b;
    };

    Mlp() = default;
    Mlp(const std::vector<int>& dims, Rng& rng);  // He-uniform init

    std::vector<double> forward(std::span<const double> x) const;
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }
    const std::vector<int>& dims() const { return dims_; }

    // Activations cache for one input; used by backprop.
    struct Trace {
        std::vector<std::vector<double>> pre;   // pre-activation per layer
        std::vector<std::vector<double>> post;  // post-activation (input at 0)
    };
    std::vector<double> forward_traced(std::span<const double> x, Trace& trace) const;

    // Accumulates dLoss/dparams into `grads` given dLoss/doutput.
    void backward(const Trace& trace, std::span<const double> dout,
                  std::vector<Layer>& grads) const;

    static std::vector<Layer> zero_like(const std::vector<Layer>& layers);

private:
    std::vector<int> dims_;
    std::vector<Layer> layers_;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

    void push(Transition t);  // FIFO once full
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const { return data_[i]; }

    std::vector<Transition> sample(std::size_t n, Rng& rng) const;

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<Transition> data_;
};

// One policy per agent per run: Q-network, delayed target copy, replay
// buffer, and the pending (state, action) awaiting its realized reward.
class DqnPolicy {
public:
    explicit DqnPolicy(const DqnConfig& config);

    const DqnConfig& config() const { return config_; }

    std::vector<double> q_values(const StateVector& s) const;
    std::vector<double> target_q_values(const StateVector& s) const;

    // epsilon-greedy; greedy ties break to the lowest action index.
    int select_action(const StateVector& s, Rng& rng);
    int greedy_action(const StateVector& s) const;

    void push_transition(Transition t) { buffer_.push(std::move(t)); }
    bool buffer_warm() const { return buffer_.size() >= config_.batch; }
    const ReplayBuffer& buffer() const { return buffer_; }

    // One SGD step on the mean squared TD error of `batch`; returns the loss.
    // Throws TrainingError when the loss is not finite.
    double train_step(std::span<const Transition> batch);
    double train_from_buffer();
    double batch_loss(std::span<const Transition> batch) const;
    std::pair<double, std::vector<Mlp::Layer>> batch_loss_and_grad(
        std::span<const Transition> batch) const;

    void sync_target() { target_net_ = q_net_; }
    long updates() const { return updates_; }

    Mlp& q_net() { return q_net_; }
    const Mlp& q_net() const { return q_net_; }
    const Mlp& target_net() const { return target_net_; }

    // Decision-time entry point: completes the pending transition with the
    // reward realized since the previous decision, trains once if the buffer
    // is warm, then selects and records the new action. Returns the payment.
    struct RewardWindow {
        double utility = 0.0;
        Money penalty = 0.0;
        Money cost = 0.0;
    };
    Money decide_and_learn(const DecisionContext& ctx, const LlmSuggestion& suggestion,
                           const RewardWindow& since_last, double upsilon, Rng& rng);

    // Completes the final pending transition with terminal = true.
    void finish_run(const RewardWindow& since_last, double upsilon, Rng& rng,
                    Money salary_monthly);

    bool has_pending() const { return pending_.has_value(); }

    std::string checkpoint_json() const;
    static DqnPolicy from_checkpoint_json(const std::string& text);

private:
    struct Pending {
        StateVector state;
        int action = 0;
    };

    double normalize_reward(double raw, Money salary_monthly) const;
    void complete_pending(const StateVector& next, bool terminal, const RewardWindow& window,
                          double upsilon, Rng& rng, Money salary_monthly);

    DqnConfig config_;
    Mlp q_net_;
    Mlp target_net_;
    ReplayBuffer buffer_;
    Rng rng_;
    long updates_ = 0;
    std::optional<Pending> pending_;
};

}  // namespace taxsim
