#include "pomdp_dtr/config.hpp"

#include <variant>
#include <vector>

#include "pomdp_dtr/errors.hpp"

namespace pomdp_dtr {

namespace {

using Slot = std::variant<std::string*, int*, double*, bool*, std::uint64_t*>;

struct Field {
  const char* name;
  Slot slot;
};

std::vector<Field> fields(RunConfig& c) {
  return {
      {"command", &c.command},
      {"input", &c.input},
      {"model", &c.model},
      {"tuples", &c.tuples},
      {"policy", &c.policy},
      {"out", &c.out},
      {"scenario", &c.scenario},
      {"n", &c.n},
      {"num_states", &c.num_states},
      {"num_actions", &c.num_actions},
      {"time_scale", &c.time_scale},
      {"init", &c.init},
      {"tie_covariances", &c.tie_covariances},
      {"ar_intercept", &c.ar_intercept},
      {"utility", &c.utility},
      {"propensity", &c.propensity},
      {"initial_law", &c.initial_law},
      {"rate_link", &c.rate_link},
      {"seed", &c.seed},
      {"threads", &c.threads},
      {"mle_iterations", &c.mle_iterations},
      {"mle_restarts", &c.mle_restarts},
      {"mle_tolerance", &c.mle_tolerance},
      {"criterion", &c.criterion},
      {"gamma", &c.gamma},
      {"basis", &c.basis},
      {"basis_inputs", &c.basis_inputs},
      {"policy_kind", &c.policy_kind},
      {"floor", &c.floor},
      {"weight_cap", &c.weight_cap},
      {"search_restarts", &c.search_restarts},
      {"search_evaluations", &c.search_evaluations},
      {"penalty", &c.penalty},
      {"eta", &c.eta},
      {"ci_points", &c.ci_points},
      {"experiment", &c.experiment},
      {"replications", &c.replications},
      {"rollouts", &c.rollouts},
      {"quadratic", &c.quadratic},
  };
}

void one_of(const std::string& key, const std::string& value, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (value == a) return;
  std::string msg = key + " must be one of";
  for (const char* a : allowed) msg += std::string(" ") + a;
  throw ValidationError(msg + " (got '" + value + "')");
}

}  // namespace

void RunConfig::validate() const {
  if (scenario != 1 && scenario != 2) throw ValidationError("scenario must be 1 or 2");
  if (n < 1) throw ValidationError("n must be positive");
  if (num_states < 1 || num_actions < 1) throw ValidationError("num_states and num_actions must be positive");
  if (!(time_scale > 0.0)) throw ValidationError("time_scale must be positive");
  one_of("init", init, {"data", "scenario"});
  one_of("utility", utility, {"scenario", "neg_abs", "belief_match"});
  one_of("propensity", propensity, {"estimate", "scenario"});
  one_of("initial_law", initial_law, {"uniform", "stationary", "stable"});
  one_of("rate_link", rate_link, {"expit", "exp"});
  if (threads < 1) throw ValidationError("threads must be at least 1");
  if (mle_iterations < 1 || mle_restarts < 1) throw ValidationError("MLE budgets must be positive");
  if (!(mle_tolerance > 0.0)) throw ValidationError("mle_tolerance must be positive");
  one_of("criterion", criterion, {"discounted", "average"});
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in (0, 1)");
  one_of("basis", basis, {"linear", "quadratic"});
  one_of("basis_inputs", basis_inputs, {"both", "belief", "x"});
  one_of("policy_kind", policy_kind, {"stochastic", "deterministic"});
  if (!(floor >= 0.0 && floor * num_actions < 1.0)) throw ValidationError("floor must satisfy 0 <= floor < 1/L");
  if (!(weight_cap > 0.0)) throw ValidationError("weight_cap must be positive");
  if (search_restarts < 1 || search_evaluations < 1) throw ValidationError("search budgets must be positive");
  if (!(penalty >= 0.0)) throw ValidationError("penalty must be nonnegative");
  if (!(eta > 0.0 && eta < 0.5)) throw ValidationError("eta must lie in (0, 0.5)");
  if (ci_points < 1) throw ValidationError("ci_points must be positive");
  one_of("experiment", experiment, {"table", "coverage", "recovery"});
  if (replications < 1 || rollouts < 2) throw ValidationError("replications >= 1 and rollouts >= 2 required");
}

RunConfig apply_config(const Json& doc, RunConfig base) {
  if (!doc.is_object()) throw ValidationError("config must be a flat JSON object");
  auto table = fields(base);
  for (const auto& [key, value] : doc.items()) {
    Field* f = nullptr;
    for (auto& candidate : table)
      if (key == candidate.name) f = &candidate;
    if (!f) throw ValidationError("unknown config key '" + key + "'");
    const auto bad = [&](const char* type) {
      throw ValidationError("config key '" + key + "' must be " + type);
    };
    std::visit(
        [&](auto* ptr) {
          using T = std::remove_pointer_t<decltype(ptr)>;
          if constexpr (std::is_same_v<T, std::string>) {
            if (!value.is_string()) bad("a string");
            *ptr = value.template get<std::string>();
          } else if constexpr (std::is_same_v<T, bool>) {
            if (!value.is_boolean()) bad("a boolean");
            *ptr = value.template get<bool>();
          } else if constexpr (std::is_same_v<T, int>) {
            if (!value.is_number_integer()) bad("an integer");
            *ptr = value.template get<int>();
          } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!value.is_number_unsigned()) bad("a nonnegative integer");
            *ptr = value.template get<std::uint64_t>();
          } else {
            if (!value.is_number()) bad("a number");
            *ptr = value.template get<double>();
          }
        },
        f->slot);
  }
  return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  return apply_config(read_json(path), std::move(base));
}

Json to_json(const RunConfig& config) {
  RunConfig copy = config;
  Json j = Json::object();
  for (const auto& f : fields(copy)) {
    std::visit([&](auto* ptr) { j[f.name] = *ptr; }, f.slot);
  }
  return j;
}

std::string config_hash(const RunConfig& config) {
  Json j = to_json(config);
  j.erase("out");
  return hex64(fnv1a(j.dump()));
}

}  // namespace pomdp_dtr
