#pragma once

// Command-line front end. Every verb reads the same JSON config (--config),
// then --set overrides, then dedicated flags; all randomness comes from the
// resolved seed. Exit codes: 0 success, 1 validation error, 2 runtime error.

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "asym/pipeline.hpp"

namespace asym::cli {

inline constexpr int kOk = 0;
inline constexpr int kValidation = 1;
inline constexpr int kRuntime = 2;

/// Raised for bad user input that is detected after argument parsing.
class UsageError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

struct Options {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool dump_config = false;

  std::string student, teacher, index, out, out_teacher;
  std::string query;
  std::size_t top_k = 10;
  std::size_t repetitions = 5;
  std::size_t num_queries = 200;
  std::size_t seeds = 5;
  std::string role = "both";
  std::string variants;
  bool supervised = false;
  std::optional<std::size_t> dim;
};

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

inline RunConfig resolve_config(const Options& o) {
  Json doc = Json::object();
  if (!o.config_file.empty()) {
    try {
      doc = Json::parse(read_file(o.config_file));
    } catch (const Json::parse_error& e) {
      throw UsageError(o.config_file + ": " + e.what());
    }
  }
  for (const auto& s : o.sets) apply_override(doc, s);
  if (o.seed) doc["seed"] = *o.seed;
  if (o.threads) {
    doc["threads"] = *o.threads;
  } else if (const char* env = std::getenv("ASYM_RETRIEVE_THREADS"); env && *env) {
    try {
      doc["threads"] = std::stoull(env);
    } catch (const std::exception&) {
      throw UsageError(std::string("ASYM_RETRIEVE_THREADS is not a number: ") + env);
    }
  }
  auto res = validate_config(doc);
  if (!res.ok()) {
    std::string msg = "invalid config:";
    for (const auto& e : res.errors) msg += "\n  " + e;
    throw UsageError(msg);
  }
  return res.config;
}

class Runner {
 public:
  Runner(const Options& o, const RunConfig& c, std::ostream& out, std::ostream& err)
      : o_(o), cfg_(c), out_(out), err_(err) {}

  std::string work(const std::string& name) const {
    std::filesystem::create_directories(cfg_.work_dir);
    return path_in(cfg_.work_dir, name);
  }

  std::string pick(const std::string& flag, const std::string& fallback) const {
    return flag.empty() ? work(fallback) : flag;
  }

  static EncoderParams load(const std::string& path, Role expect) {
    if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path);
    auto p = load_checkpoint(path);
    if (p.role != expect) {
      throw UsageError(path + " holds a " + to_string(p.role) + " checkpoint, expected " + to_string(expect));
    }
    return p;
  }

  void save(const EncoderParams& p, const std::string& path) {
    save_checkpoint(p, path);
    err_ << "wrote " << path << " (" << checkpoint_hash(p) << ")\n";
  }

  void write_report(const std::string& path, Json j) {
    j["timestamp"] = utc_timestamp();
    write_file(path, j.dump(2) + "\n");
    err_ << "wrote " << path << "\n";
  }

  void log_train(const TrainReport& r) {
    err_ << r.stage << ": " << r.losses.size() << " steps, " << std::fixed << std::setprecision(2) << r.seconds
         << "s, epoch losses";
    err_ << std::setprecision(4);
    for (double l : r.epoch_mean_losses) err_ << " " << l;
    if (!r.heldout_cosine.empty()) {
      err_ << ", held-out cosine " << r.heldout_cosine.front() << " -> " << r.heldout_cosine.back();
    }
    err_ << "\n";
    err_.unsetf(std::ios::floatfield);
  }

  std::vector<TrainingTriplet> triplets(const ExperimentData& d) const {
    const auto p = path_in(cfg_.data_dir, files::triplets);
    if (!std::filesystem::exists(p)) throw IoError("missing " + p + " (run curate first)");
    auto t = resolve_triplets(read_triplets(p), d.train_queries, d.corpus, cfg_.vocab_size);
    if (t.empty()) throw DegenerateInputError("no usable triplets in " + p);
    return t;
  }

  int gen_data() {
    const auto d = generate_data(cfg_);
    write_data(d, cfg_.data_dir);
    out_ << "corpus " << d.corpus.size() << ", train queries " << d.train_queries.size() << ", test queries "
         << d.test_queries.size() << ", unlabeled " << d.unlabeled.size() << ", sts " << d.sts.size() << " -> "
         << cfg_.data_dir << "\n";
    return kOk;
  }

  int curate() {
    const auto d = read_data(cfg_.data_dir);
    auto judges = make_judges(cfg_);
    std::vector<JudgeClient*> jp;
    for (auto& j : judges) jp.push_back(j.get());
    const auto c = asym::curate(d, cfg_, jp);
    write_qrels(path_in(cfg_.data_dir, files::train_qrels), c.labels.qrels);
    write_triplets(path_in(cfg_.data_dir, files::triplets), c.triplets.triplets);
    Json rep = c.report();
    rep["config_fingerprint"] = config_fingerprint(cfg_);
    write_report(path_in(cfg_.data_dir, files::curation_report), rep);
    out_ << rep.dump(2) << "\n";
    return kOk;
  }

  int pretrain() {
    if (o_.role != "student" && o_.role != "teacher" && o_.role != "both") {
      throw UsageError("--role must be student, teacher or both");
    }
    const auto d = read_data(cfg_.data_dir);
    const auto pairs = pretrain_pairs(d, cfg_.vocab_size);
    const auto tc = cfg_.stage(cfg_.pretrain);
    Json reports = Json::array();
    if (o_.role != "teacher") {
      auto s = new_student(cfg_);
      const auto r = pretrain_independent(s, pairs, tc);
      log_train(r);
      reports.push_back(r.to_json());
      save(s, work("student.pretrain.ckpt"));
    }
    if (o_.role != "student") {
      auto t = new_teacher(cfg_);
      const auto r = pretrain_independent(t, pairs, tc);
      log_train(r);
      reports.push_back(r.to_json());
      save(t, work("teacher.pretrain.ckpt"));
    }
    write_report(work("pretrain.json"), {{"reports", reports}, {"config_fingerprint", config_fingerprint(cfg_)}});
    return kOk;
  }

  int align() {
    auto s = load(pick(o_.student, "student.pretrain.ckpt"), Role::student);
    const auto t = load(pick(o_.teacher, "teacher.pretrain.ckpt"), Role::teacher);
    const auto d = read_data(cfg_.data_dir);
    TrainReport r;
    if (o_.supervised) {
      r = stage1_align_pairs(s, t, supervised_pairs(triplets(d)), cfg_.stage(cfg_.align));
    } else {
      r = stage1_align(s, t, align_texts(d, cfg_.vocab_size), cfg_.stage(cfg_.align));
    }
    log_train(r);
    save(s, pick(o_.out, "student.align.ckpt"));
    write_report(work("align.json"), {{"report", r.to_json()}, {"config_fingerprint", config_fingerprint(cfg_)}});
    return kOk;
  }

  int finetune() {
    auto s = load(pick(o_.student, "student.align.ckpt"), Role::student);
    auto t = load(pick(o_.teacher, "teacher.pretrain.ckpt"), Role::teacher);
    const auto d = read_data(cfg_.data_dir);
    const auto r = stage2_joint(s, t, triplets(d), cfg_.stage(cfg_.finetune));
    log_train(r);
    save(s, pick(o_.out, "student.finetune.ckpt"));
    save(t, pick(o_.out_teacher, "teacher.finetune.ckpt"));
    write_report(work("finetune.json"), {{"report", r.to_json()}, {"config_fingerprint", config_fingerprint(cfg_)}});
    return kOk;
  }

  int distill() {
    auto s = load(pick(o_.student, "student.pretrain.ckpt"), Role::student);
    const auto t = load(pick(o_.teacher, "teacher.pretrain.ckpt"), Role::teacher);
    const auto d = read_data(cfg_.data_dir);
    const auto r = distill_baseline(s, t, triplets(d), cfg_.stage(cfg_.distill));
    log_train(r);
    save(s, pick(o_.out, "student.distill.ckpt"));
    write_report(work("distill.json"), {{"report", r.to_json()}, {"config_fingerprint", config_fingerprint(cfg_)}});
    return kOk;
  }

  /// Document encoder for `index`: a teacher checkpoint, or a student one for
  /// the symmetric distillation baseline.
  static EncoderParams load_doc_encoder(const std::string& path) {
    if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path);
    return load_checkpoint(path);
  }

  int index() {
    const auto enc = load_doc_encoder(pick(o_.teacher, "teacher.finetune.ckpt"));
    const std::size_t dim = o_.dim.value_or(cfg_.train.mrl_dims.front());
    if (enc.role == Role::teacher &&
        std::find(cfg_.train.mrl_dims.begin(), cfg_.train.mrl_dims.end(), dim) == cfg_.train.mrl_dims.end()) {
      throw UsageError("--dim must be one of mrl_dims");
    }
    const auto d = read_data(cfg_.data_dir);
    const auto idx = build_index(enc, detail::doc_texts(d.corpus), dim, cfg_.threads);
    const auto path = pick(o_.index, "index.bin");
    save_index(idx, path);
    out_ << "indexed " << idx.count() << " documents at dim " << idx.dim << " (" << idx.builder_tag << ") -> "
         << path << "\n";
    return kOk;
  }

  int search() {
    if (o_.query.empty()) throw UsageError("search needs --query");
    if (o_.top_k == 0) throw UsageError("--top-k must be >= 1");
    const auto s = load(pick(o_.student, "student.finetune.ckpt"), Role::student);
    const auto idx = load_index(pick(o_.index, "index.bin"));
    const auto hits = asym::search(idx, s, o_.query, o_.top_k);
    for (std::size_t i = 0; i < hits.size(); ++i) {
      out_ << (i + 1) << "\t" << hits[i].doc_id << "\t" << std::fixed << std::setprecision(6) << hits[i].score
           << "\n";
    }
    return kOk;
  }

  int eval() {
    const auto s = load(pick(o_.student, "student.finetune.ckpt"), Role::student);
    const auto t = load_doc_encoder(pick(o_.teacher, "teacher.finetune.ckpt"));
    const auto idx = load_index(pick(o_.index, "index.bin"));
    const std::string expect_tag = checkpoint_hash(t) + ":" + std::to_string(idx.dim);
    if (idx.builder_tag != expect_tag) {
      throw UsageError("index was not built from the given document encoder (" + idx.builder_tag + ")");
    }
    const auto d = read_data(cfg_.data_dir);
    const std::string fp = config_fingerprint(cfg_) + ":" + checkpoint_hash(s) + ":" + checkpoint_hash(t);
    const auto rep = run_benchmark(s, t, idx, d.tasks(), cfg_.eval_k, fp);
    const std::string base = o_.out.empty() ? work("report") : o_.out;
    write_report(base + ".json", rep.to_json());
    write_file(base + ".txt", rep.table());
    write_file(base + ".csv", rep.csv());
    out_ << rep.table();
    return kOk;
  }

  int ablate() {
    if (o_.seeds == 0) throw UsageError("--seeds must be >= 1");
    std::vector<AblationSpec> specs;
    if (o_.variants.empty()) {
      specs = default_ablations();
    } else {
      std::stringstream ss(o_.variants);
      std::string v;
      while (std::getline(ss, v, ',')) specs.push_back({v, variant_from_string(v)});
    }
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < o_.seeds; ++i) seeds.push_back(cfg_.train.seed + i);
    const auto table = run_ablations(cfg_, specs, seeds, [&](const std::string& m) { err_ << m << "\n"; });
    Json j = table.to_json();
    j["config_fingerprint"] = config_fingerprint(cfg_);
    write_report(o_.out.empty() ? work("ablation.json") : o_.out, j);
    out_ << table.table();
    return kOk;
  }

  int bench() {
    if (o_.num_queries == 0) throw UsageError("--num-queries must be >= 1");
    const auto s = load(pick(o_.student, "student.finetune.ckpt"), Role::student);
    const auto idx = load_index(pick(o_.index, "index.bin"));
    const auto d = read_data(cfg_.data_dir);
    std::vector<std::string> qs;
    for (const auto& q : d.test_queries) {
      if (qs.size() == o_.num_queries) break;
      qs.push_back(q.text);
    }
    const auto rep = bench_latency(s, idx, qs, o_.repetitions, o_.top_k);
    write_report(o_.out.empty() ? work("bench.json") : o_.out, rep.to_json());
    out_ << std::fixed << std::setprecision(1) << "qps " << rep.qps << "  p50 " << rep.p50_us << "us  p99 "
         << rep.p99_us << "us  (" << qs.size() << " queries x " << o_.repetitions << ")\n";
    return kOk;
  }

 private:
  const Options& o_;
  const RunConfig& cfg_;
  std::ostream& out_;
  std::ostream& err_;
};

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Asymmetric dual-encoder retrieval: data curation, training, indexing and evaluation",
               "asym_retrieve"};
  app.require_subcommand(1, 1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_file, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--set", o.sets, "Override a config key, e.g. --set curation.t_doc=0.8")->take_all();
    sub->add_option("--seed", o.seed, "Random seed (overrides config)");
    sub->add_option("--threads", o.threads, "Worker threads (default: $ASYM_RETRIEVE_THREADS or 1)")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--dump-config", o.dump_config, "Print the resolved config and exit");
    return sub;
  };

  std::map<std::string, CLI::App*> verbs;
  auto verb = [&](const std::string& name, const std::string& desc) {
    auto* sub = common(app.add_subcommand(name, desc));
    verbs[name] = sub;
    return sub;
  };

  verb("gen-data", "Generate the synthetic clustered corpus, queries and benchmark files");
  verb("curate", "Dedup, mine candidates, judge, and write qrels and triplets");
  verb("pretrain", "Independently pretrain the student and/or teacher encoders")
      ->add_option("--role", o.role, "student, teacher or both");
  {
    auto* s = verb("align", "Stage I: align the student to the frozen teacher");
    s->add_option("--student", o.student, "Student checkpoint");
    s->add_option("--teacher", o.teacher, "Teacher checkpoint");
    s->add_option("--out", o.out, "Output student checkpoint");
    s->add_flag("--supervised", o.supervised, "Align on labeled (query, positive) pairs instead of self pairs");
  }
  {
    auto* s = verb("finetune", "Stage II: joint fine-tuning of student and teacher");
    s->add_option("--student", o.student, "Student checkpoint");
    s->add_option("--teacher", o.teacher, "Teacher checkpoint");
    s->add_option("--out", o.out, "Output student checkpoint");
    s->add_option("--out-teacher", o.out_teacher, "Output teacher checkpoint");
  }
  {
    auto* s = verb("distill", "Train the symmetric score-distillation baseline");
    s->add_option("--student", o.student, "Student checkpoint");
    s->add_option("--teacher", o.teacher, "Teacher checkpoint");
    s->add_option("--out", o.out, "Output student checkpoint");
  }
  {
    auto* s = verb("index", "Embed the corpus with a document encoder and write the index");
    s->add_option("--teacher", o.teacher, "Document encoder checkpoint");
    s->add_option("--index", o.index, "Output index path");
    s->add_option("--dim", o.dim, "Index dimension (default: smallest MRL dimension)");
  }
  {
    auto* s = verb("search", "Search the index with a text query");
    s->add_option("--student", o.student, "Query encoder checkpoint");
    s->add_option("--index", o.index, "Index path");
    s->add_option("--query", o.query, "Query text")->required();
    s->add_option("--top-k", o.top_k, "Number of results");
  }
  {
    auto* s = verb("eval", "Evaluate retrieval, reranking and STS; write report.{json,txt,csv}");
    s->add_option("--student", o.student, "Query encoder checkpoint");
    s->add_option("--teacher", o.teacher, "Document encoder checkpoint");
    s->add_option("--index", o.index, "Index path");
    s->add_option("--out", o.out, "Report path prefix");
  }
  {
    auto* s = verb("ablate", "Train and compare pipeline variants over several seeds");
    s->add_option("--seeds", o.seeds, "Number of consecutive seeds starting at --seed");
    s->add_option("--variants", o.variants,
                  "Comma-separated subset of full,no_stage1,no_stage2,distill,supervised_stage1");
    s->add_option("--out", o.out, "Output JSON path");
  }
  {
    auto* s = verb("bench", "Measure per-query encode + search latency");
    s->add_option("--student", o.student, "Query encoder checkpoint");
    s->add_option("--index", o.index, "Index path");
    s->add_option("--repetitions", o.repetitions, "Timed passes over the query set (>= 3)");
    s->add_option("--num-queries", o.num_queries, "Number of test queries to time");
    s->add_option("--top-k", o.top_k, "Results per query");
    s->add_option("--out", o.out, "Output JSON path");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    // --help on a subcommand is handled by CLI11 and carries exit code 0.
    err << e.what() << "\n\n" << app.help();
    return kValidation;
  }

  std::string name;
  for (const auto& [n, sub] : verbs) {
    if (sub->parsed()) name = n;
  }

  try {
    const RunConfig cfg = resolve_config(o);
    if (o.dump_config) {
      out << cfg.to_json().dump(2) << "\n";
      return kOk;
    }
    Runner r(o, cfg, out, err);
    if (name == "gen-data") return r.gen_data();
    if (name == "curate") return r.curate();
    if (name == "pretrain") return r.pretrain();
    if (name == "align") return r.align();
    if (name == "finetune") return r.finetune();
    if (name == "distill") return r.distill();
    if (name == "index") return r.index();
    if (name == "search") return r.search();
    if (name == "eval") return r.eval();
    if (name == "ablate") return r.ablate();
    if (name == "bench") return r.bench();
    err << "unknown verb\n" << app.help();
    return kValidation;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace asym::cli
