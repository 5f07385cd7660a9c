#pragma once

#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ace/dataset.hpp"
#include "ace/search.hpp"

namespace ace {

inline nlohmann::ordered_json to_json(const StepRecord& rec) {
  nlohmann::ordered_json j;
  j["t"] = rec.t;
  j["theta_before"] = rec.theta_before;
  j["probs"] = rec.probs;
  j["mask"] = rec.mask.str();
  j["score"] = rec.score;
  j["reward"] = rec.reward;
  j["theta_after"] = rec.theta_after;
  j["best"] = rec.best;
  return j;
}

inline StepRecord step_from_json(const nlohmann::json& j) {
  StepRecord rec;
  rec.t = j.at("t").get<std::size_t>();
  rec.theta_before = j.at("theta_before").get<std::vector<double>>();
  rec.probs = j.at("probs").get<std::vector<double>>();
  rec.mask = Mask::parse(j.at("mask").get<std::string>());
  rec.score = j.at("score").get<double>();
  rec.reward = j.at("reward").get<std::vector<double>>();
  rec.theta_after = j.at("theta_after").get<std::vector<double>>();
  rec.best = j.at("best").get<double>();
  return rec;
}

/// One JSON object per line, fields in the fixed order
/// t, theta_before, probs, mask, score, reward, theta_after, best.
inline void write_step_jsonl(std::ostream& os, const StepRecord& rec) { os << to_json(rec).dump() << '\n'; }

inline void write_run_jsonl(std::ostream& os, const RunLog& log) {
  for (const auto& rec : log.steps) write_step_jsonl(os, rec);
}

/// Reads step records back; an `error` record (written when a run aborts)
/// is reported as an exception.
inline RunLog read_run_jsonl(std::istream& is) {
  RunLog log;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    if (j.contains("error")) throw Error(ErrorCode::Io, "run log ends in error: " + j["error"].get<std::string>());
    log.steps.push_back(step_from_json(j));
  }
  return log;
}

inline void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve) {
  os << "t,best,step_score\n";
  for (const auto& p : curve) {
    os << p.t << ',' << detail::format_double(p.best) << ',' << detail::format_double(p.step_score) << '\n';
  }
}

inline void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "variant,mean,sd,n\n";
  for (const auto& r : rows) {
    os << to_string(r.variant) << ',' << detail::format_double(r.mean) << ',' << detail::format_double(r.sd) << ','
       << r.n << '\n';
  }
}

}  // namespace ace
