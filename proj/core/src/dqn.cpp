#include "taxsim/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "taxsim/errors.hpp"
#include "taxsim/io.hpp"

#include <json.hpp>

namespace taxsim {

namespace {
constexpr int kSuggestionFeature = 2;
}

StateVector encode_state(const DecisionContext& ctx, const LlmSuggestion& suggestion) {
    const double sa = ctx.salary_annual > 0.0 ? ctx.salary_annual : 1.0;
    const double sm = ctx.salary_monthly > 0.0 ? ctx.salary_monthly : 1.0;
    StateVector s(kStateDim, 0.0);
    s[0] = ctx.balance / sa;
    s[1] = ctx.owed_amount / sm;
    s[2] = ctx.owed_amount > 0.0
               ? std::clamp(suggestion.amount / ctx.owed_amount, 0.0, 1.0)
               : 0.0;
    s[3] = ctx.sales_tax.rate;
    s[4] = ctx.income_tax.top_marginal_rate();
    s[5] = ctx.enforcement.audit_probability;
    s[6] = ctx.enforcement.penalty_rate / (1.0 + ctx.enforcement.penalty_rate);
    s[7] = ctx.enforcement.fixed_fine / sa;
    switch (ctx.public_goods.kind) {
        case PublicGoodsFunction::Kind::linear: s[8] = 1.0; break;
        case PublicGoodsFunction::Kind::capitalist_log: s[9] = 1.0; break;
        case PublicGoodsFunction::Kind::socialist: s[10] = 1.0; break;
        case PublicGoodsFunction::Kind::custom_table: s[11] = 1.0; break;
    }
    s[12] = ctx.cumulative_gap / sa;
    s[13] = static_cast<double>(ctx.steps_since_audit) /
            static_cast<double>(std::max<long>(1, ctx.enforcement.audit_period));
    s[14] = ctx.kind == DecisionKind::sales_tax ? 1.0 : 0.0;
    return s;
}

double gamma_from_eta(long eta) {
    if (eta < 0) throw DomainError("eta must be >= 0");
    return std::pow(0.01, 1.0 / static_cast<double>(eta + 1));
}

double noisy_reward(double r, double upsilon, Rng& rng) {
    if (upsilon <= 0.0 || upsilon > 1.0) throw DomainError("upsilon must be in (0,1]");
    const double std = 1.0 - upsilon;
    if (std <= 0.0) return r;
    return r + rng.normal(0.0, std);
}

double compute_reward(double utility, Money penalty, Money cost) {
    return utility - penalty - cost;
}

Mlp::Mlp(const std::vector<int>& dims, Rng& rng) : dims_(dims) {
    if (dims.size() < 2) throw ConfigError("network needs at least input and output dims");
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Layer layer;
        layer.in = dims[l];
        layer.out = dims[l + 1];
        layer.w.resize(static_cast<std::size_t>(layer.in) * layer.out);
        layer.b.assign(layer.out, 0.0);
        const double limit = std::sqrt(6.0 / layer.in);
        for (auto& w : layer.w) w = rng.uniform(-limit, limit);
        layers_.push_back(std::move(layer));
    }
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
    std::vector<double> cur(x.begin(), x.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        std::vector<double> next(layer.out, 0.0);
        for (int o = 0; o < layer.out; ++o) {
            const double* wr = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
            double acc = layer.b[o];
            for (int i = 0; i < layer.in; ++i) acc += wr[i] * cur[i];
            next[o] = acc;
        }
        if (l + 1 < layers_.size())
            for (auto& v : next) v = std::max(0.0, v);  // rectifier on hidden layers
        cur = std::move(next);
    }
    return cur;
}

std::vector<double> Mlp::forward_traced(std::span<const double> x, Trace& trace) const {
    trace.pre.clear();
    trace.post.clear();
    trace.post.emplace_back(x.begin(), x.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        const auto& cur = trace.post.back();
        std::vector<double> pre(layer.out, 0.0);
        for (int o = 0; o < layer.out; ++o) {
            const double* wr = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
            double acc = layer.b[o];
            for (int i = 0; i < layer.in; ++i) acc += wr[i] * cur[i];
            pre[o] = acc;
        }
        trace.pre.push_back(pre);
        if (l + 1 < layers_.size())
            for (auto& v : pre) v = std::max(0.0, v);
        trace.post.push_back(std::move(pre));
    }
    return trace.post.back();
}

void Mlp::backward(const Trace& trace, std::span<const double> dout,
                   std::vector<Layer>& grads) const {
    std::vector<double> delta(dout.begin(), dout.end());
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const Layer& layer = layers_[l];
        Layer& g = grads[l];
        const auto& input = trace.post[l];
        for (int o = 0; o < layer.out; ++o) {
            double* gw = g.w.data() + static_cast<std::size_t>(o) * layer.in;
            const double d = delta[o];
            if (d == 0.0) continue;
            g.b[o] += d;
            for (int i = 0; i < layer.in; ++i) gw[i] += d * input[i];
        }
        if (l == 0) break;
        std::vector<double> prev(layer.in, 0.0);
        for (int o = 0; o < layer.out; ++o) {
            const double* wr = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
            const double d = delta[o];
            if (d == 0.0) continue;
            for (int i = 0; i < layer.in; ++i) prev[i] += d * wr[i];
        }
        // rectifier derivative of the previous hidden layer
        const auto& pre = trace.pre[l - 1];
        for (int i = 0; i < layer.in; ++i)
            if (pre[i] <= 0.0) prev[i] = 0.0;
        delta = std::move(prev);
    }
}

std::vector<Mlp::Layer> Mlp::zero_like(const std::vector<Layer>& layers) {
    std::vector<Layer> z = layers;
    for (auto& l : z) {
        std::fill(l.w.begin(), l.w.end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
    return z;
}

void ReplayBuffer::push(Transition t) {
    if (data_.size() < capacity_) {
        data_.push_back(std::move(t));
    } else {
        data_[head_] = std::move(t);
        head_ = (head_ + 1) % capacity_;
    }
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
    std::vector<Transition> batch;
    batch.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        batch.push_back(data_[rng.uniform_int(static_cast<std::uint64_t>(data_.size()))]);
    return batch;
}

DqnPolicy::DqnPolicy(const DqnConfig& config)
    : config_(config), buffer_(config.replay_capacity), rng_(derive_seed(config.seed, "dqn")) {
    std::vector<int> dims;
    dims.push_back(kStateDim);
    for (int h : config_.hidden_layers) dims.push_back(h);
    const int actions = config_.num_actions();
    dims.push_back(actions);
    q_net_ = Mlp(dims, rng_);

    // Suggestion prior: seed the first two layers with hinge pairs
    // h_{2a} = relu(f_sugg - a/K), h_{2a+1} = relu(a/K - f_sugg) and give each
    // action head weight -prior on its own pair, so Q(s,a) starts out as
    // -prior * |f_sugg - a/K| and the untrained greedy action imitates the
    // suggestion. Every weight stays trainable.
    const int hinge_units = 2 * actions;
    const bool craft = config_.suggestion_prior > 0.0 && config_.hidden_layers.size() >= 2 &&
                       config_.hidden_layers[0] >= hinge_units &&
                       config_.hidden_layers[1] >= hinge_units;
    if (craft) {
        auto& l0 = q_net_.layers()[0];
        for (int a = 0; a < actions; ++a) {
            const double level = static_cast<double>(a) / config_.payment_levels;
            for (int side = 0; side < 2; ++side) {
                const int row = 2 * a + side;
                double* wr = l0.w.data() + static_cast<std::size_t>(row) * l0.in;
                std::fill(wr, wr + l0.in, 0.0);
                wr[kSuggestionFeature] = side == 0 ? 1.0 : -1.0;
                l0.b[row] = side == 0 ? -level : level;
            }
        }
        auto& l1 = q_net_.layers()[1];
        for (int row = 0; row < hinge_units; ++row) {
            double* wr = l1.w.data() + static_cast<std::size_t>(row) * l1.in;
            std::fill(wr, wr + l1.in, 0.0);
            wr[row] = 1.0;
            l1.b[row] = 0.0;
        }
        auto& head = q_net_.layers().back();
        for (int a = 0; a < actions; ++a) {
            double* wr = head.w.data() + static_cast<std::size_t>(a) * head.in;
            for (int i = 0; i < head.in; ++i)
                wr[i] = i < hinge_units ? 0.0 : rng_.uniform(-0.01, 0.01);
            wr[2 * a] = -config_.suggestion_prior;
            wr[2 * a + 1] = -config_.suggestion_prior;
            head.b[a] = 0.0;
        }
    }
    target_net_ = q_net_;
}

std::vector<double> DqnPolicy::q_values(const StateVector& s) const { return q_net_.forward(s); }

std::vector<double> DqnPolicy::target_q_values(const StateVector& s) const {
    return target_net_.forward(s);
}

int DqnPolicy::greedy_action(const StateVector& s) const {
    auto q = q_values(s);
    int best = 0;
    for (int a = 1; a < static_cast<int>(q.size()); ++a)
        if (q[a] > q[best]) best = a;
    return best;
}

int DqnPolicy::select_action(const StateVector& s, Rng& rng) {
    if (rng.uniform() < config_.epsilon())
        return static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(config_.num_actions())));
    return greedy_action(s);
}

std::pair<double, std::vector<Mlp::Layer>> DqnPolicy::batch_loss_and_grad(
    std::span<const Transition> batch) const {
    auto grads = Mlp::zero_like(q_net_.layers());
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    Mlp::Trace trace;
    std::vector<double> dout(config_.num_actions(), 0.0);
    for (const auto& t : batch) {
        double target = t.reward;
        if (!t.terminal) {
            auto qn = target_net_.forward(t.next_state);
            target += config_.gamma * *std::max_element(qn.begin(), qn.end());
        }
        auto q = q_net_.forward_traced(t.state, trace);
        const double diff = q[t.action] - target;
        loss += diff * diff * inv_n;
        std::fill(dout.begin(), dout.end(), 0.0);
        dout[t.action] = 2.0 * diff * inv_n;
        q_net_.backward(trace, dout, grads);
    }
    return {loss, std::move(grads)};
}

double DqnPolicy::batch_loss(std::span<const Transition> batch) const {
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (const auto& t : batch) {
        double target = t.reward;
        if (!t.terminal) {
            auto qn = target_net_.forward(t.next_state);
            target += config_.gamma * *std::max_element(qn.begin(), qn.end());
        }
        auto q = q_net_.forward(t.state);
        const double diff = q[t.action] - target;
        loss += diff * diff * inv_n;
    }
    return loss;
}

double DqnPolicy::train_step(std::span<const Transition> batch) {
    if (batch.empty()) throw TrainingError("empty training batch");
    auto [loss, grads] = batch_loss_and_grad(batch);
    if (!std::isfinite(loss)) {
        std::ostringstream diag;
        diag << "non-finite TD loss at update " << updates_ << " (batch " << batch.size()
             << ", gamma " << config_.gamma << ", lr " << config_.learning_rate << ")";
        throw TrainingError(diag.str());
    }
    auto& layers = q_net_.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        for (std::size_t i = 0; i < layers[l].w.size(); ++i)
            layers[l].w[i] -= config_.learning_rate * grads[l].w[i];
        for (std::size_t i = 0; i < layers[l].b.size(); ++i)
            layers[l].b[i] -= config_.learning_rate * grads[l].b[i];
    }
    ++updates_;
    if (config_.target_sync_every > 0 && updates_ % config_.target_sync_every == 0) sync_target();
    return loss;
}

double DqnPolicy::train_from_buffer() {
    auto batch = buffer_.sample(config_.batch, rng_);
    return train_step(batch);
}

double DqnPolicy::normalize_reward(double raw, Money salary_monthly) const {
    return raw / std::max(1.0, salary_monthly);
}

void DqnPolicy::complete_pending(const StateVector& next, bool terminal,
                                 const RewardWindow& window, double upsilon, Rng& rng,
                                 Money salary_monthly) {
    if (!pending_) return;
    const double raw = compute_reward(window.utility, window.penalty, window.cost);
    const double r = noisy_reward(normalize_reward(raw, salary_monthly), upsilon, rng);
    Transition t;
    t.state = pending_->state;
    t.action = pending_->action;
    t.reward = r;
    t.next_state = next;
    t.terminal = terminal;
    buffer_.push(std::move(t));
    pending_.reset();
    if (buffer_warm()) train_from_buffer();
}

Money DqnPolicy::decide_and_learn(const DecisionContext& ctx, const LlmSuggestion& suggestion,
                                  const RewardWindow& since_last, double upsilon, Rng& rng) {
    if (ctx.owed_amount <= 0.0) return 0.0;  // degenerate decision, nothing to learn from
    StateVector s = encode_state(ctx, suggestion);
    complete_pending(s, false, since_last, upsilon, rng, ctx.salary_monthly);
    const int action = select_action(s, rng);
    pending_ = Pending{std::move(s), action};
    const double fraction = static_cast<double>(action) / config_.payment_levels;
    return std::clamp(round_cents(fraction * ctx.owed_amount), 0.0, ctx.owed_amount);
}

void DqnPolicy::finish_run(const RewardWindow& since_last, double upsilon, Rng& rng,
                           Money salary_monthly) {
    if (!pending_) return;
    StateVector zeros(kStateDim, 0.0);
    complete_pending(zeros, true, since_last, upsilon, rng, salary_monthly);
}

static nlohmann::json layers_to_json(const std::vector<Mlp::Layer>& layers) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& l : layers)
        arr.push_back({{"in", l.in}, {"out", l.out}, {"w", l.w}, {"b", l.b}});
    return arr;
}

static void layers_from_json(const nlohmann::json& arr, std::vector<Mlp::Layer>& layers) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].w = arr.at(i).at("w").get<std::vector<double>>();
        layers[i].b = arr.at(i).at("b").get<std::vector<double>>();
    }
}

std::string DqnPolicy::checkpoint_json() const {
    nlohmann::json j{
        {"config",
         {{"hidden_layers", config_.hidden_layers},
          {"learning_rate", config_.learning_rate},
          {"replay_capacity", config_.replay_capacity},
          {"batch", config_.batch},
          {"target_sync_every", config_.target_sync_every},
          {"epsilon_min", config_.epsilon_min},
          {"epsilon_max", config_.epsilon_max},
          {"zeta", config_.zeta},
          {"gamma", config_.gamma},
          {"noise_std", config_.noise_std},
          {"payment_levels", config_.payment_levels},
          {"suggestion_prior", config_.suggestion_prior},
          {"seed", config_.seed}}},
        {"dims", q_net_.dims()},
        {"updates", updates_},
        {"q", layers_to_json(q_net_.layers())},
        {"target", layers_to_json(target_net_.layers())},
    };
    return j.dump(2);
}

DqnPolicy DqnPolicy::from_checkpoint_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    DqnConfig cfg;
    const auto& c = j.at("config");
    cfg.hidden_layers = c.at("hidden_layers").get<std::vector<int>>();
    cfg.learning_rate = c.at("learning_rate");
    cfg.replay_capacity = c.at("replay_capacity");
    cfg.batch = c.at("batch");
    cfg.target_sync_every = c.at("target_sync_every");
    cfg.epsilon_min = c.at("epsilon_min");
    cfg.epsilon_max = c.at("epsilon_max");
    cfg.zeta = c.at("zeta");
    cfg.gamma = c.at("gamma");
    cfg.noise_std = c.at("noise_std");
    cfg.payment_levels = c.at("payment_levels");
    cfg.suggestion_prior = c.at("suggestion_prior");
    cfg.seed = c.at("seed");
    DqnPolicy policy(cfg);
    layers_from_json(j.at("q"), policy.q_net_.layers());
    layers_from_json(j.at("target"), policy.target_net_.layers());
    policy.updates_ = j.at("updates");
    return policy;
}

}  // namespace taxsim
