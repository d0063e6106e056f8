#include "pomdp_dtr/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "pomdp_dtr/errors.hpp"

namespace pomdp_dtr {

namespace {

struct Row {
  std::string id;
  double time = 0.0;
  int action = 0;
  VectorXd x;
  int line = 0;
};

std::string row_msg(int line, const std::string& what) {
  return "row " + std::to_string(line) + ": " + what;
}

double parse_double(const std::string& s, int line, const std::string& field) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(e[-1]))) --e;
  const auto r = std::from_chars(b, e, v);
  if (b == e || r.ec != std::errc() || r.ptr != e) {
    throw ValidationError(row_msg(line, "field '" + field + "' is not a number ('" + s + "')"));
  }
  if (!std::isfinite(v)) throw ValidationError(row_msg(line, "field '" + field + "' is not finite"));
  return v;
}

int parse_action(double v, int line) {
  if (v != std::floor(v) || v < 1) {
    throw ValidationError(row_msg(line, "action must be a positive integer"));
  }
  return static_cast<int>(v) - 1;
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, delim)) out.push_back(cur);
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || std::isspace(static_cast<unsigned char>(s.back())))) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  return s.substr(b);
}

Dataset assemble(const std::vector<Row>& rows, const IngestOptions& options) {
  if (rows.empty()) throw ValidationError("no visit records");
  int max_action = 0;
  for (const auto& r : rows) max_action = std::max(max_action, r.action + 1);
  const int num_actions = options.num_actions > 0 ? options.num_actions : max_action;
  if (!(options.time_scale > 0.0)) throw ValidationError("time scale must be positive");

  Dataset data;
  std::unordered_set<std::string> seen;
  std::vector<int> first_line;
  std::size_t i = 0;
  while (i < rows.size()) {
    const std::string& id = rows[i].id;
    if (!seen.insert(id).second) {
      throw ValidationError(row_msg(rows[i].line, "records of subject '" + id + "' are not contiguous"));
    }
    std::size_t end = i;
    while (end < rows.size() && rows[end].id == id) ++end;
    Trajectory t;
    t.subject_id = id;
    const auto p = rows[i].x.size();
    t.obs.resize(static_cast<Eigen::Index>(end - i), p);
    for (std::size_t k = i; k < end; ++k) {
      const Row& r = rows[k];
      if (k > i && !(r.time > rows[k - 1].time)) {
        throw ValidationError(row_msg(r.line, "visit times must be strictly increasing within subject '" + id + "'"));
      }
      if (r.action >= num_actions) {
        throw ValidationError(row_msg(r.line, "action " + std::to_string(r.action + 1) + " exceeds " +
                                                  std::to_string(num_actions) + " treatments"));
      }
      t.times.push_back((r.time - rows[i].time) / options.time_scale);
      t.actions.push_back(r.action);
      t.obs.row(static_cast<Eigen::Index>(k - i)) = r.x.transpose();
    }
    if (t.length() < 2) {
      throw ValidationError(row_msg(rows[i].line, "subject '" + id + "' has fewer than two visits"));
    }
    data.push_back(std::move(t));
    i = end;
  }
  return data;
}

std::string extension(const std::string& path) {
  const auto dot = path.find_last_of('.');
  const auto slash = path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return "";
  return path.substr(dot);
}

}  // namespace

Dataset parse_delimited(std::istream& in, const IngestOptions& options) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("row 1: missing header");
  line = trim(line);
  char delim = options.delimiter;
  if (delim == '\0') delim = line.find('\t') != std::string::npos ? '\t' : ',';
  const auto header = split(line, delim);
  if (header.size() < 4 || trim(header[0]) != "subject_id" || trim(header[1]) != "time" ||
      trim(header[2]) != "action") {
    throw ValidationError("row 1: header must be subject_id, time, action, x_1, ..., x_p");
  }
  const int p = static_cast<int>(header.size()) - 3;
  for (int i = 0; i < p; ++i) {
    if (trim(header[3 + i]) != "x_" + std::to_string(i + 1)) {
      throw ValidationError("row 1: expected column 'x_" + std::to_string(i + 1) + "', found '" +
                            trim(header[3 + i]) + "'");
    }
  }
  std::vector<Row> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto f = split(line, delim);
    if (static_cast<int>(f.size()) != p + 3) {
      throw ValidationError(row_msg(lineno, "expected " + std::to_string(p + 3) + " fields, found " +
                                                std::to_string(f.size())));
    }
    Row r;
    r.line = lineno;
    r.id = trim(f[0]);
    if (r.id.empty()) throw ValidationError(row_msg(lineno, "empty subject_id"));
    r.time = parse_double(f[1], lineno, "time");
    r.action = parse_action(parse_double(f[2], lineno, "action"), lineno);
    r.x.resize(p);
    for (int i = 0; i < p; ++i) r.x[i] = parse_double(f[3 + i], lineno, "x_" + std::to_string(i + 1));
    rows.push_back(std::move(r));
  }
  return assemble(rows, options);
}

Dataset parse_json_lines(std::istream& in, const IngestOptions& options) {
  std::string line;
  std::vector<Row> rows;
  int lineno = 0;
  int p = -1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const std::exception& e) {
      throw ValidationError(row_msg(lineno, std::string("invalid JSON: ") + e.what()));
    }
    if (!j.is_object()) throw ValidationError(row_msg(lineno, "record must be an object"));
    int xs = 0;
    while (j.contains("x_" + std::to_string(xs + 1))) ++xs;
    if (j.size() != static_cast<std::size_t>(xs + 3) || !j.contains("subject_id") || !j.contains("time") ||
        !j.contains("action")) {
      throw ValidationError(row_msg(lineno, "record must hold exactly subject_id, time, action, x_1..x_p"));
    }
    if (xs == 0) throw ValidationError(row_msg(lineno, "no covariates"));
    if (p >= 0 && xs != p) throw ValidationError(row_msg(lineno, "covariate count differs from earlier rows"));
    p = xs;
    Row r;
    r.line = lineno;
    const auto& id = j["subject_id"];
    if (id.is_string()) r.id = id.get<std::string>();
    else if (id.is_number_integer()) r.id = std::to_string(id.get<long long>());
    else throw ValidationError(row_msg(lineno, "subject_id must be a string or integer"));
    const auto num = [&](const char* key) {
      const auto& v = j[key];
      if (!v.is_number()) throw ValidationError(row_msg(lineno, std::string("field '") + key + "' is not a number"));
      const double d = v.get<double>();
      if (!std::isfinite(d)) throw ValidationError(row_msg(lineno, std::string("field '") + key + "' is not finite"));
      return d;
    };
    r.time = num("time");
    r.action = parse_action(num("action"), lineno);
    r.x.resize(p);
    for (int i = 0; i < p; ++i) r.x[i] = num(("x_" + std::to_string(i + 1)).c_str());
    rows.push_back(std::move(r));
  }
  return assemble(rows, options);
}

Dataset read_trajectories(const std::string& path, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  const std::string ext = extension(path);
  try {
    if (ext == ".jsonl" || ext == ".ndjson") return parse_json_lines(in, options);
    return parse_delimited(in, options);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

void write_trajectories(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  const auto p = data.empty() ? 0 : data.front().obs.cols();
  out << "subject_id,time,action";
  for (Eigen::Index i = 0; i < p; ++i) out << ",x_" << i + 1;
  out << '\n';
  char buf[64];
  const auto num = [&](double v) {
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
  };
  for (const auto& t : data) {
    for (int j = 0; j < t.length(); ++j) {
      out << t.subject_id << ',' << num(t.times[j]) << ',' << t.actions[j] + 1;
      for (Eigen::Index i = 0; i < p; ++i) out << ',' << num(t.obs(j, i));
      out << '\n';
    }
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Json make_artifact(const std::string& format, const Json& body, const Json& provenance) {
  Json doc;
  doc["format"] = format;
  doc["version"] = kArtifactVersion;
  doc["provenance"] = provenance;
  doc["body"] = body;
  return doc;
}

Json artifact_body(const Json& artifact, const std::string& format) {
  if (!artifact.is_object() || !artifact.contains("format") || !artifact.contains("body")) {
    throw ValidationError("not a versioned artifact (expected format '" + format + "')");
  }
  if (artifact["format"] != format) {
    throw ValidationError("artifact format is '" + artifact["format"].get<std::string>() + "', expected '" +
                          format + "'");
  }
  if (!artifact.contains("version") || artifact["version"] != kArtifactVersion) {
    throw ValidationError("unsupported " + format + " version");
  }
  return artifact["body"];
}

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ValidationError(path + ": invalid JSON: " + e.what());
  }
}

void write_json(const std::string& path, const Json& doc) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

Json matrix_to_json(const MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    out.push_back(std::move(row));
  }
  return out;
}

MatrixXd matrix_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + ": expected an array of rows");
  const auto rows = j.size();
  const auto cols = rows ? j[0].size() : 0;
  MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) throw ValidationError(what + ": ragged matrix");
    for (std::size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) throw ValidationError(what + ": non-numeric entry");
      m(i, k) = j[i][k].get<double>();
    }
  }
  return m;
}

Json vector_to_json(const VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

VectorXd vector_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + ": expected an array");
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError(what + ": non-numeric entry");
    v[i] = j[i].get<double>();
  }
  return v;
}

namespace {

const Json& field(const Json& j, const char* key, const std::string& what) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(what + ": missing field '" + key + "'");
  return j[key];
}

template <class T>
T get(const Json& j, const char* key, const std::string& what) {
  try {
    return field(j, key, what).get<T>();
  } catch (const Json::type_error&) {
    throw ValidationError(what + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

Json to_json(const ModelParams& params) {
  Json j;
  j["K"] = params.num_states;
  j["L"] = params.num_actions;
  j["p"] = params.obs_dim;
  j["layout"] = "row-major; states and actions 1-based in names, 0-based in array order";
  Json rates = Json::array();
  for (const auto& q : params.rates) rates.push_back(matrix_to_json(q));
  j["rates"] = rates;
  j["tie_covariances"] = params.emission.tie_covariances;
  j["ar_intercept"] = params.emission.ar_intercept;
  Json states = Json::array();
  for (const auto& s : params.emission.states) {
    Json e;
    e["mu"] = vector_to_json(s.mu);
    e["psi"] = matrix_to_json(s.psi);
    e["sigma"] = matrix_to_json(s.sigma);
    if (!params.emission.tie_covariances) e["sigma_init"] = matrix_to_json(s.sigma_init);
    states.push_back(std::move(e));
  }
  j["emission"] = states;
  j["init_dist"] = vector_to_json(params.init_dist);
  return j;
}

ModelParams model_from_json(const Json& j) {
  const std::string what = "model";
  ModelParams m;
  m.num_states = get<int>(j, "K", what);
  m.num_actions = get<int>(j, "L", what);
  m.obs_dim = get<int>(j, "p", what);
  const auto& rates = field(j, "rates", what);
  if (!rates.is_array()) throw ValidationError("model: rates must be an array");
  for (std::size_t a = 0; a < rates.size(); ++a) {
    m.rates.push_back(matrix_from_json(rates[a], "model rates[" + std::to_string(a + 1) + "]"));
  }
  m.emission.tie_covariances = get<bool>(j, "tie_covariances", what);
  m.emission.ar_intercept = get<bool>(j, "ar_intercept", what);
  const auto& states = field(j, "emission", what);
  if (!states.is_array()) throw ValidationError("model: emission must be an array");
  for (std::size_t s = 0; s < states.size(); ++s) {
    const std::string w = "model emission[" + std::to_string(s + 1) + "]";
    StateEmission e;
    e.mu = vector_from_json(field(states[s], "mu", w), w + ".mu");
    e.psi = matrix_from_json(field(states[s], "psi", w), w + ".psi");
    e.sigma = matrix_from_json(field(states[s], "sigma", w), w + ".sigma");
    if (!m.emission.tie_covariances) {
      e.sigma_init = matrix_from_json(field(states[s], "sigma_init", w), w + ".sigma_init");
    }
    m.emission.states.push_back(std::move(e));
  }
  m.init_dist = vector_from_json(field(j, "init_dist", what), "model init_dist");
  m.validate();
  return m;
}

Json to_json(const BasisSpec& basis) {
  Json j;
  j["kind"] = to_string(basis.kind);
  j["inputs"] = to_string(basis.inputs);
  j["intercept"] = basis.intercept;
  j["K"] = basis.num_states;
  j["p"] = basis.obs_dim;
  j["names"] = basis.names();
  return j;
}

BasisSpec basis_from_json(const Json& j) {
  const std::string what = "basis";
  BasisSpec b;
  b.kind = parse_basis_kind(get<std::string>(j, "kind", what));
  b.inputs = parse_basis_inputs(get<std::string>(j, "inputs", what));
  b.intercept = get<bool>(j, "intercept", what);
  b.num_states = get<int>(j, "K", what);
  b.obs_dim = get<int>(j, "p", what);
  return b;
}

Json to_json(const PolicyParams& policy) {
  Json j;
  j["L"] = policy.num_actions;
  j["kind"] = to_string(policy.kind);
  j["floor"] = policy.floor;
  j["basis"] = to_json(policy.basis);
  j["xi"] = matrix_to_json(policy.xi);
  return j;
}

PolicyParams policy_from_json(const Json& j) {
  const std::string what = "policy";
  PolicyParams p;
  p.num_actions = get<int>(j, "L", what);
  p.kind = parse_policy_kind(get<std::string>(j, "kind", what));
  p.floor = get<double>(j, "floor", what);
  p.basis = basis_from_json(field(j, "basis", what));
  p.xi = matrix_from_json(field(j, "xi", what), "policy xi");
  p.validate();
  return p;
}

Json to_json(const UtilitySpec& spec) {
  Json j;
  j["kind"] = to_string(spec.kind);
  switch (spec.kind) {
    case UtilityKind::neg_abs:
      j["constant"] = spec.constant;
      j["indices"] = spec.indices;
      break;
    case UtilityKind::belief_match:
      j["group"] = spec.group;
      break;
    case UtilityKind::custom_linear:
      j["coefficients"] = vector_to_json(spec.coefficients);
      break;
  }
  return j;
}

UtilitySpec utility_from_json(const Json& j) {
  const std::string what = "utility";
  UtilitySpec u;
  u.kind = parse_utility_kind(get<std::string>(j, "kind", what));
  if (u.kind == UtilityKind::neg_abs) {
    u.constant = get<double>(j, "constant", what);
    u.indices = get<std::vector<int>>(j, "indices", what);
  } else if (u.kind == UtilityKind::belief_match) {
    u.group = get<std::vector<int>>(j, "group", what);
  } else {
    u.coefficients = vector_from_json(field(j, "coefficients", what), "utility coefficients");
  }
  return u;
}

Json to_json(const std::vector<MdpTuple>& tuples) {
  Json rows = Json::array();
  for (const auto& t : tuples) {
    Json r;
    r["subject_id"] = t.subject_id;
    r["subject"] = t.subject;
    r["j"] = t.j;
    r["belief"] = vector_to_json(t.s.belief);
    r["x"] = vector_to_json(t.s.x);
    r["action"] = t.a + 1;
    r["utility"] = t.u;
    r["belief_next"] = vector_to_json(t.s_next.belief);
    r["x_next"] = vector_to_json(t.s_next.x);
    r["behavior_prob"] = t.behavior_prob;
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<MdpTuple> tuples_from_json(const Json& j) {
  if (!j.is_array()) throw ValidationError("tuples: expected an array");
  std::vector<MdpTuple> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string what = "tuple " + std::to_string(i + 1);
    const auto& r = j[i];
    MdpTuple t;
    t.subject_id = get<std::string>(r, "subject_id", what);
    t.subject = get<int>(r, "subject", what);
    t.j = get<int>(r, "j", what);
    t.s.belief = vector_from_json(field(r, "belief", what), what);
    t.s.x = vector_from_json(field(r, "x", what), what);
    t.a = get<int>(r, "action", what) - 1;
    t.u = get<double>(r, "utility", what);
    t.s_next.belief = vector_from_json(field(r, "belief_next", what), what);
    t.s_next.x = vector_from_json(field(r, "x_next", what), what);
    t.behavior_prob = get<double>(r, "behavior_prob", what);
    if (t.a < 0) throw ValidationError(what + ": action must be >= 1");
    if (!(t.behavior_prob > 0.0 && t.behavior_prob <= 1.0)) {
      throw ValidationError(what + ": behavior_prob must lie in (0, 1]");
    }
    out.push_back(std::move(t));
  }
  return out;
}

Json to_json(const PropensityModel& model) {
  Json j;
  j["L"] = model.num_actions;
  j["basis"] = to_json(model.basis);
  j["coef"] = matrix_to_json(model.coef);
  j["se"] = matrix_to_json(model.se);
  j["ridge"] = model.ridge;
  j["floor"] = model.floor;
  j["refits"] = model.refits;
  j["separation_warning"] = model.separation_warning;
  j["converged"] = model.converged;
  return j;
}

}  // namespace pomdp_dtr
