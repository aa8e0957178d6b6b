#pragma once

// Dataset records and their JSONL encodings:
//   corpus / queries  {"id","text"[,"cluster"]}
//   qrels             {"qid","did","label"}
//   triplets          {"qid","pos":[ids],"neg":[ids]}
//   sts               {"qid","sentence","label"}

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "asym/common.hpp"

namespace asym {

struct Document {
  std::string id;
  std::string text;
  std::optional<int> cluster;

  bool operator==(const Document&) const = default;
};

using Query = Document;

class Qrels {
 public:
  void set(const std::string& qid, const std::string& did, int label) {
    if (label != 0 && label != 1) throw ConfigError("qrels: label must be 0 or 1");
    labels_[qid][did] = label;
  }

  std::optional<int> label(const std::string& qid, const std::string& did) const {
    auto q = labels_.find(qid);
    if (q == labels_.end()) return std::nullopt;
    auto d = q->second.find(did);
    if (d == q->second.end()) return std::nullopt;
    return d->second;
  }

  std::set<std::string> relevant(const std::string& qid) const {
    std::set<std::string> out;
    auto q = labels_.find(qid);
    if (q == labels_.end()) return out;
    for (const auto& [did, l] : q->second) {
      if (l == 1) out.insert(did);
    }
    return out;
  }

  std::vector<std::string> with_label(const std::string& qid, int label) const {
    std::vector<std::string> out;
    auto q = labels_.find(qid);
    if (q == labels_.end()) return out;
    for (const auto& [did, l] : q->second) {
      if (l == label) out.push_back(did);
    }
    return out;
  }

  std::vector<std::string> query_ids() const {
    std::vector<std::string> out;
    for (const auto& [q, _] : labels_) out.push_back(q);
    return out;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [_, m] : labels_) n += m.size();
    return n;
  }

  const std::map<std::string, std::map<std::string, int>>& raw() const { return labels_; }

  bool operator==(const Qrels&) const = default;

 private:
  std::map<std::string, std::map<std::string, int>> labels_;
};

struct TripletRecord {
  std::string qid;
  std::vector<std::string> pos;
  std::vector<std::string> neg;

  bool operator==(const TripletRecord&) const = default;
};

using TripletSet = std::vector<TripletRecord>;

struct StsSample {
  std::string qid;
  std::string sentence;
  int label = 0;
};

// ---------------------------------------------------------------------------
// JSONL

inline std::vector<Json> read_jsonl(const std::string& path) {
  const std::string bytes = read_file(path);
  std::vector<Json> rows;
  std::istringstream in(bytes);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

inline void write_jsonl(const std::string& path, const std::vector<Json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  write_file(path, out);
}

inline Json to_json(const Document& d) {
  Json j = {{"id", d.id}, {"text", d.text}};
  if (d.cluster) j["cluster"] = *d.cluster;
  return j;
}

inline std::vector<Document> read_documents(const std::string& path) {
  std::vector<Document> docs;
  std::set<std::string> ids;
  for (const auto& r : read_jsonl(path)) {
    Document d;
    try {
      d.id = r.at("id").get<std::string>();
      d.text = r.at("text").get<std::string>();
      if (r.contains("cluster")) d.cluster = r.at("cluster").get<int>();
    } catch (const Json::exception& e) {
      throw IoError(path + ": " + e.what());
    }
    if (!ids.insert(d.id).second) throw IoError(path + ": duplicate id '" + d.id + "'");
    docs.push_back(std::move(d));
  }
  return docs;
}

inline void write_documents(const std::string& path, const std::vector<Document>& docs) {
  std::vector<Json> rows;
  for (const auto& d : docs) rows.push_back(to_json(d));
  write_jsonl(path, rows);
}

inline Qrels read_qrels(const std::string& path) {
  Qrels q;
  for (const auto& r : read_jsonl(path)) {
    try {
      q.set(r.at("qid").get<std::string>(), r.at("did").get<std::string>(), r.at("label").get<int>());
    } catch (const Json::exception& e) {
      throw IoError(path + ": " + e.what());
    }
  }
  return q;
}

inline void write_qrels(const std::string& path, const Qrels& qrels) {
  std::vector<Json> rows;
  for (const auto& [qid, m] : qrels.raw()) {
    for (const auto& [did, l] : m) rows.push_back({{"qid", qid}, {"did", did}, {"label", l}});
  }
  write_jsonl(path, rows);
}

inline TripletSet read_triplets(const std::string& path) {
  TripletSet out;
  for (const auto& r : read_jsonl(path)) {
    try {
      out.push_back({r.at("qid").get<std::string>(), r.at("pos").get<std::vector<std::string>>(),
                     r.at("neg").get<std::vector<std::string>>()});
    } catch (const Json::exception& e) {
      throw IoError(path + ": " + e.what());
    }
  }
  return out;
}

inline void write_triplets(const std::string& path, const TripletSet& ts) {
  std::vector<Json> rows;
  for (const auto& t : ts) rows.push_back({{"qid", t.qid}, {"pos", t.pos}, {"neg", t.neg}});
  write_jsonl(path, rows);
}

inline std::vector<StsSample> read_sts(const std::string& path) {
  std::vector<StsSample> out;
  for (const auto& r : read_jsonl(path)) {
    try {
      out.push_back({r.at("qid").get<std::string>(), r.at("sentence").get<std::string>(),
                     r.at("label").get<int>()});
    } catch (const Json::exception& e) {
      throw IoError(path + ": " + e.what());
    }
  }
  return out;
}

inline void write_sts(const std::string& path, const std::vector<StsSample>& rows) {
  std::vector<Json> out;
  for (const auto& s : rows) out.push_back({{"qid", s.qid}, {"sentence", s.sentence}, {"label", s.label}});
  write_jsonl(path, out);
}

}  // namespace asym
