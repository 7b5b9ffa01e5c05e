#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "taxsim/econ.hpp"
#include "taxsim/money.hpp"

namespace taxsim {

enum class DecisionKind { income_tax, sales_tax };

// Everything visible to an agent at decision time. History and persona lines
// are ordered most recent first.
struct DecisionContext {
    int agent_id = 0;
    Money balance = 0.0;
    Money salary_monthly = 0.0;
    Money salary_annual = 0.0;
    std::vector<std::string> persona;
    SalesTaxRate sales_tax;
    IncomeTaxSchedule income_tax;
    PublicGoodsFunction public_goods;
    EnforcementPolicy enforcement;
    std::vector<std::string> history;
    std::vector<std::string> outcomes;  // rendered (decision, reward) lines
    Money owed_amount = 0.0;
    DecisionKind kind = DecisionKind::income_tax;
    Money cumulative_gap = 0.0;
    long step = 0;
    long steps_since_audit = 0;
};

struct LlmSuggestion {
    Money amount = 0.0;
    std::string raw_text;
    long latency_ms = 0;
    std::string backend_id;
};

enum class ComplianceProfile {
    law_abiding,
    random_persona,
    law_breaking,
    half_pay,
    never_pay,
    full_pay,
    dose_response,
    risk_sensitive,
};

ComplianceProfile profile_from_string(const std::string& name);  // throws ConfigError
std::string profile_to_string(ComplianceProfile p);

struct BackendSpec {
    enum class Kind { remote_chat, scripted_persona };
    Kind kind = Kind::scripted_persona;

    struct Remote {
        std::string endpoint;  // e.g. https://host/v1 (TAXSIM_LLM_ENDPOINT)
        std::string api_key;   // bearer token (TAXSIM_LLM_API_KEY)
        std::string model;     // TAXSIM_LLM_MODEL
        double temperature = 0.7;
        long timeout_seconds = 30;
        int max_retries = 3;
        double requests_per_second = 0.0;  // 0 = uncapped
    } remote;

    struct Scripted {
        ComplianceProfile profile = ComplianceProfile::full_pay;
        int dose_k = 0;               // dose_response only
        std::uint64_t seed = 0;       // profile RNG seed (per run session)
    } scripted;

    static BackendSpec scripted(ComplianceProfile p, std::uint64_t seed = 0, int dose_k = 0);
    static BackendSpec remote_from_env();  // throws ConfigError when env vars missing
};

// The persona line injected k times in the dose-response experiment.
extern const char* const kSyntheticEvasionSnippet;

// The exact closing question every prompt ends with.
extern const char* const kClosingQuestion;

// Deterministic prompt render: persona snippets (newest first), policy
// summary, transaction history, outcome lines, owed statement, closing
// question.
std::string build_prompt(const DecisionContext& ctx);

// The remote wire protocol splits the same content into a system message
// (persona + policies) and a user message (history + question).
std::string build_system_message(const DecisionContext& ctx);
std::string build_user_message(const DecisionContext& ctx);

// First decimal number token in `raw`, ignoring currency symbols and
// thousands separators. Throws ParseError when no token exists or the
// token is negative.
Money parse_amount(const std::string& raw);

// One backend instance per run. Scripted sessions are reproducible from
// (profile, seed, call index); remote sessions share a process-wide rate cap.
class BackendSession {
public:
    virtual ~BackendSession() = default;
    virtual LlmSuggestion suggest(const DecisionContext& ctx) = 0;
    virtual std::string id() const = 0;
};

std::unique_ptr<BackendSession> make_backend_session(const BackendSpec& spec);

// Single-shot convenience used by tests and calibration trials.
LlmSuggestion suggest(const BackendSpec& spec, const DecisionContext& ctx);

// Per-run evasion probability of the dose-response profile: logistic in k,
// calibrated to 3.3% at k=0 and 98% at k=20.
double dose_response_probability(int k);

}  // namespace taxsim
