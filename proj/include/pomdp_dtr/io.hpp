#pragma once

// Trajectory files and versioned JSON artifacts.
//
// Trajectory files hold one record per visit with fields subject_id, time,
// action (1-based) and x_1..x_p, either as delimited text with a header row
// or as JSON lines. Rows of a subject must be contiguous and in time order.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pomdp_dtr/belief_transform.hpp"
#include "pomdp_dtr/ct_hmm.hpp"
#include "pomdp_dtr/regime.hpp"
#include "pomdp_dtr/v_learning.hpp"

namespace pomdp_dtr {

using Json = nlohmann::ordered_json;

inline constexpr int kArtifactVersion = 1;

struct IngestOptions {
  int num_actions = 0;      // 0: take the largest action seen
  double time_scale = 1.0;  // times are divided by this after shifting to start at 0
  char delimiter = '\0';    // '\0': ',' or '\t' guessed from the header
};

/// Format is chosen by extension: .jsonl / .ndjson are JSON lines, anything
/// else is delimited text. Errors name the offending row (1-based, header
/// is row 1).
Dataset read_trajectories(const std::string& path, const IngestOptions& options = {});
Dataset parse_delimited(std::istream& in, const IngestOptions& options = {});
Dataset parse_json_lines(std::istream& in, const IngestOptions& options = {});

void write_trajectories(const std::string& path, const Dataset& data);

std::uint64_t fnv1a(const std::string& text);
std::string hex64(std::uint64_t v);

/// {"format", "version", "provenance": {...}, "body"}.
Json make_artifact(const std::string& format, const Json& body, const Json& provenance);
/// Checks format and version and returns the body.
Json artifact_body(const Json& artifact, const std::string& format);

Json read_json(const std::string& path);
void write_json(const std::string& path, const Json& doc);

Json matrix_to_json(const MatrixXd& m);  // row-major nested arrays
MatrixXd matrix_from_json(const Json& j, const std::string& what);
Json vector_to_json(const VectorXd& v);
VectorXd vector_from_json(const Json& j, const std::string& what);

Json to_json(const ModelParams& params);
ModelParams model_from_json(const Json& j);

Json to_json(const BasisSpec& basis);
BasisSpec basis_from_json(const Json& j);

Json to_json(const PolicyParams& policy);
PolicyParams policy_from_json(const Json& j);

Json to_json(const UtilitySpec& spec);
UtilitySpec utility_from_json(const Json& j);

Json to_json(const std::vector<MdpTuple>& tuples);
std::vector<MdpTuple> tuples_from_json(const Json& j);

Json to_json(const PropensityModel& model);

}  // namespace pomdp_dtr
