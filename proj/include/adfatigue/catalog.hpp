#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "adfatigue/errors.hpp"
#include "adfatigue/similarity.hpp"
#include "adfatigue/text.hpp"

namespace adfatigue {

// Creative catalog: one JSON object per line.
//   {"creative_id": "a01", "campaign_id": "A", "active_from": 0,
//    "active_until": 604800, "text": "special event coupon",
//    "embedding": [0.1, 0.3, ...]}
// "embedding_file" may replace "embedding"; it names a file of
// whitespace-separated reals, resolved relative to the catalog's directory.
// Blank lines and lines starting with '#' are ignored.
struct CatalogReadOptions {
  Tokenizer tokenizer = whitespace_tokenize;
  std::filesystem::path base_dir = ".";
};

namespace detail {

inline std::vector<double> read_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file " + path.string());
  std::vector<double> v;
  std::string tok;
  while (in >> tok) {
    auto d = text::parse_double(tok);
    if (!d) throw CatalogIntegrityError("embedding file " + path.string() + ": bad value '" + tok + "'");
    v.push_back(*d);
  }
  return v;
}

}  // namespace detail

inline std::vector<Creative> read_catalog(std::istream& in, const CatalogReadOptions& opts = {}) {
  using nlohmann::json;
  std::vector<Creative> out;
  std::unordered_set<std::string> ids;
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = text::split_ws(line);
    if (toks.empty() || toks.front().front() == '#') continue;
    auto fail = [&](const std::string& msg) {
      return CatalogIntegrityError("line " + std::to_string(lineno) + ": " + msg);
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw fail(std::string("malformed record: ") + e.what());
    }
    if (!j.is_object()) throw fail("record is not an object");
    Creative c;
    try {
      c.creative_id = j.at("creative_id").get<std::string>();
      c.campaign_id = j.at("campaign_id").get<std::string>();
      c.active_from = j.at("active_from").get<std::int64_t>();
      c.active_until = j.at("active_until").get<std::int64_t>();
      if (j.contains("text")) c.tokens = opts.tokenizer(j.at("text").get<std::string>());
      if (j.contains("embedding")) {
        c.image_embedding = j.at("embedding").get<std::vector<double>>();
      } else if (j.contains("embedding_file")) {
        c.image_embedding =
            detail::read_embedding_file(opts.base_dir / j.at("embedding_file").get<std::string>());
      }
    } catch (const json::exception& e) {
      throw fail(std::string("bad field: ") + e.what());
    }
    if (!text::is_valid_id(c.creative_id)) throw fail("invalid creative_id");
    if (!text::is_valid_id(c.campaign_id)) throw fail("invalid campaign_id");
    if (c.active_from >= c.active_until) throw fail("active_from must precede active_until");
    if (!ids.insert(c.creative_id).second) throw fail("duplicate creative_id " + c.creative_id);
    if (!c.image_embedding.empty()) {
      if (dim == 0) dim = c.image_embedding.size();
      if (c.image_embedding.size() != dim) {
        throw fail("embedding dimension " + std::to_string(c.image_embedding.size()) +
                   " differs from catalog dimension " + std::to_string(dim));
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

inline std::vector<Creative> read_catalog_file(const std::filesystem::path& path,
                                               CatalogReadOptions opts = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open catalog " + path.string());
  opts.base_dir = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  return read_catalog(in, opts);
}

// Writes tokens back as space-joined text (counts expanded); reading the
// result with the default tokenizer reproduces the token bags.
inline void write_catalog(std::ostream& os, std::span<const Creative> catalog) {
  for (const auto& c : catalog) {
    nlohmann::ordered_json j;
    j["creative_id"] = c.creative_id;
    j["campaign_id"] = c.campaign_id;
    j["active_from"] = c.active_from;
    j["active_until"] = c.active_until;
    std::string textv;
    for (const auto& [tok, n] : c.tokens)
      for (std::uint32_t i = 0; i < n; ++i) textv += (textv.empty() ? "" : " ") + tok;
    j["text"] = textv;
    if (!c.image_embedding.empty()) j["embedding"] = c.image_embedding;
    os << j.dump() << '\n';
  }
}

}  // namespace adfatigue
