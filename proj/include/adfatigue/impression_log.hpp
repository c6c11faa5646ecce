#pragma once

#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "adfatigue/errors.hpp"
#include "adfatigue/features.hpp"
#include "adfatigue/history.hpp"

namespace adfatigue {

enum class Arm { kFatigueAware, kBaseline, kRandom };

inline constexpr Arm kArms[] = {Arm::kFatigueAware, Arm::kBaseline, Arm::kRandom};

inline std::string_view to_string(Arm a) {
  switch (a) {
    case Arm::kFatigueAware: return "FA";
    case Arm::kBaseline: return "Baseline";
    case Arm::kRandom: return "Random";
  }
  return "?";
}

inline Arm parse_arm(std::string_view s) {
  if (s == "FA") return Arm::kFatigueAware;
  if (s == "Baseline") return Arm::kBaseline;
  if (s == "Random") return Arm::kRandom;
  throw DataError("unknown arm '" + std::string(s) + "'");
}

enum class ConversionType { kNone, kPostClick, kPostImpression };

inline std::string_view to_string(ConversionType c) {
  switch (c) {
    case ConversionType::kNone: return "none";
    case ConversionType::kPostClick: return "post-click";
    case ConversionType::kPostImpression: return "post-impression";
  }
  return "?";
}

inline ConversionType parse_conversion_type(std::string_view s) {
  if (s == "none") return ConversionType::kNone;
  if (s == "post-click") return ConversionType::kPostClick;
  if (s == "post-impression") return ConversionType::kPostImpression;
  throw DataError("unknown conversion_type '" + std::string(s) + "'");
}

using CandidateList = std::shared_ptr<const std::vector<std::string>>;

// One selection decision and its outcome.
struct ImpressionRecord {
  Timestamp t = 0;
  std::int32_t day = 0;
  std::string user_id;
  std::string campaign_id;
  Arm arm = Arm::kRandom;
  std::vector<std::string> context;  // raw context features, bias included
  CandidateList candidates;
  std::vector<double> kappas;        // fatigue per candidate at decision time
  std::uint32_t chosen_index = 0;
  bool click = false;
  bool conversion = false;
  ConversionType conversion_type = ConversionType::kNone;
  std::uint32_t frequency = 0;       // exposures in the engine's 24h history
  double f_true = 0.0;               // ground-truth fatigue (simulation only)

  const std::string& chosen() const { return (*candidates)[chosen_index]; }
  double kappa() const { return kappas.empty() ? 0.0 : kappas[chosen_index]; }
  bool post_click_conversion() const { return conversion && conversion_type == ConversionType::kPostClick; }
  ContextVector context_vector() const { return ContextVector(context); }
};

inline constexpr std::string_view kLogFormat = "adfatigue-impression-log";
inline constexpr int kLogVersion = 1;

// Line-delimited JSON. First line is the header
//   {"format":"adfatigue-impression-log","version":1}
// followed by one record per line with a fixed field order.
inline void write_log_header(std::ostream& os) {
  nlohmann::ordered_json h;
  h["format"] = kLogFormat;
  h["version"] = kLogVersion;
  os << h.dump() << '\n';
}

inline void write_log_record(std::ostream& os, const ImpressionRecord& r) {
  nlohmann::ordered_json j;
  j["t"] = r.t;
  j["day"] = r.day;
  j["user_id"] = r.user_id;
  j["campaign_id"] = r.campaign_id;
  j["arm"] = to_string(r.arm);
  j["context"] = r.context;
  j["candidates"] = *r.candidates;
  j["kappas"] = r.kappas;
  j["chosen"] = r.chosen();
  j["kappa"] = r.kappa();
  j["click"] = r.click;
  j["conversion"] = r.conversion;
  j["conversion_type"] = to_string(r.conversion_type);
  j["frequency"] = r.frequency;
  j["f_true"] = r.f_true;
  os << j.dump() << '\n';
}

inline void write_log(std::ostream& os, const std::vector<ImpressionRecord>& log) {
  write_log_header(os);
  for (const auto& r : log) write_log_record(os, r);
}

inline std::vector<ImpressionRecord> read_log(std::istream& is) {
  using nlohmann::json;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) {
    return DataError("impression log line " + std::to_string(lineno) + ": " + msg);
  };
  if (!std::getline(is, line)) throw DataError("impression log is empty");
  ++lineno;
  try {
    auto h = json::parse(line);
    if (h.at("format").get<std::string>() != kLogFormat) throw fail("not an impression log");
    if (h.at("version").get<int>() != kLogVersion) throw fail("unsupported log version");
  } catch (const json::exception& e) {
    throw fail(std::string("bad header: ") + e.what());
  }
  // Candidate lists are shared between records with the same set.
  std::unordered_map<std::string, CandidateList> interned;
  std::vector<ImpressionRecord> out;
  while (std::getline(is, line)) {
    ++lineno;
    if (text::split_ws(line).empty()) continue;
    ImpressionRecord r;
    try {
      auto j = json::parse(line);
      r.t = j.at("t").get<Timestamp>();
      r.day = j.at("day").get<std::int32_t>();
      r.user_id = j.at("user_id").get<std::string>();
      r.campaign_id = j.at("campaign_id").get<std::string>();
      r.arm = parse_arm(j.at("arm").get<std::string>());
      r.context = j.at("context").get<std::vector<std::string>>();
      auto cands = j.at("candidates").get<std::vector<std::string>>();
      if (cands.empty()) throw fail("empty candidate list");
      std::string key;
      for (const auto& c : cands) key.append(c).push_back('\n');
      auto& slot = interned[key];
      if (!slot) slot = std::make_shared<const std::vector<std::string>>(std::move(cands));
      r.candidates = slot;
      r.kappas = j.at("kappas").get<std::vector<double>>();
      if (!r.kappas.empty() && r.kappas.size() != r.candidates->size()) throw fail("kappas length mismatch");
      const auto chosen = j.at("chosen").get<std::string>();
      bool found = false;
      for (std::uint32_t k = 0; k < r.candidates->size(); ++k) {
        if ((*r.candidates)[k] == chosen) {
          r.chosen_index = k;
          found = true;
          break;
        }
      }
      if (!found) throw fail("chosen creative is not among the candidates");
      r.click = j.at("click").get<bool>();
      r.conversion = j.at("conversion").get<bool>();
      r.conversion_type = parse_conversion_type(j.at("conversion_type").get<std::string>());
      if (r.conversion != (r.conversion_type != ConversionType::kNone)) {
        throw fail("conversion flag and conversion_type disagree");
      }
      r.frequency = j.at("frequency").get<std::uint32_t>();
      r.f_true = j.at("f_true").get<double>();
    } catch (const json::exception& e) {
      throw fail(std::string("malformed record: ") + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace adfatigue
