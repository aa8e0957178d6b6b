// Acceptance checks. Prints one [PASS]/[FAIL] line per criterion and exits
// non-zero if any fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "asym/cli.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace asym;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x, int prec = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << x;
  return s.str();
}

std::string sci(double x) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << x;
  return s.str();
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 g(1001);
  double worst = 0.0;
  std::string worst_name;
  auto check = [&](const std::string& name, const GradcheckReport& r) {
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = name;
    }
  };
  TrainConfig cfg;
  cfg.lambda1 = 0.8;
  cfg.lambda2 = 1.7;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t dim = 8, nneg = 1 + trial % 6;
    const double tau = 0.05 + 0.3 * (trial % 5) / 4.0;
    std::vector<Vec> in = {oracle::random_unit(g, dim), oracle::random_unit(g, dim)};
    for (std::size_t i = 0; i < nneg; ++i) in.push_back(oracle::random_unit(g, dim));
    auto negs = [](const std::vector<Vec>& x) { return std::vector<Vec>(x.begin() + 2, x.end()); };
    // Teacher and student scores are cosines, so both live in [-1, 1].
    std::uniform_real_distribution<double> cosine(-1.0, 1.0);
    Vec ts, ss;
    for (std::size_t i = 0; i <= nneg; ++i) {
      ts.push_back(cosine(g));
      ss.push_back(cosine(g));
    }

    check("infonce", gradcheck([&](const auto& x) { return infonce(x[0], x[1], negs(x), tau); }, in));
    check("selfcontrast",
          gradcheck([&](const auto& x) { return asym_infonce_selfcontrast(x[0], x[1], negs(x), tau); }, in));
    check("mse", gradcheck([&](const auto& x) { return mse_align(x[0], x[1]); }, in));
    cfg.tau = tau;
    check("stage1", gradcheck([&](const auto& x) { return stage1_loss(x[0], x[1], negs(x), cfg); }, in));
    check("stage2", gradcheck([&](const auto& x) { return stage2_loss(x[0], x[1], negs(x), tau); }, in));
    check("mrl", gradcheck([&](const auto& x) { return mrl_loss(x[0], x[1], negs(x), {2, 4, 8}, tau); }, in));
    check("kd", gradcheck([&](const auto& x) { return kd_loss(ts, x[0], x[1], negs(x), tau); }, in));
    check("kl", gradcheck([&](const auto& x) { return kl_divergence(x[0], ts, tau); }, {ss}));

    const auto p = init_encoder(trial % 2 ? Role::teacher : Role::student, 24, {6, 5, 4}, 500 + trial);
    TokenSeq toks;
    for (int i = 0, n = 1 + trial % 5; i < n; ++i) toks.ids.push_back(static_cast<std::uint32_t>(g() % 24));
    check("encoder", gradcheck_encoder(p, toks, oracle::random_vec(g, 4)));
  }
  const double secs = since(t0);
  return {worst < 1e-4 && secs < 60.0,
          "max rel err " + sci(worst) + " (" + worst_name + "), " + fmt(secs, 1) + "s"};
}

Outcome loss_values() {
  const auto t0 = Clock::now();
  std::mt19937_64 g(1002);
  double worst = 0.0;
  auto cmp = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t dim = 4 + trial % 13, nneg = trial % 8;
    const double tau = 0.02 + 0.98 * (trial % 17) / 16.0;
    const auto q = oracle::random_unit(g, dim), pos = oracle::random_unit(g, dim);
    std::vector<Vec> negs;
    for (std::size_t i = 0; i < nneg; ++i) negs.push_back(oracle::random_unit(g, dim));
    TrainConfig cfg;
    cfg.tau = tau;
    cfg.lambda1 = 0.5 + (trial % 3);
    cfg.lambda2 = 0.25 * (trial % 5);
    cmp(infonce(q, pos, negs, tau).value, oracle::infonce(q, pos, negs, tau));
    cmp(mse_align(q, pos).value, oracle::mse(q, pos));
    cmp(stage1_loss(q, pos, negs, cfg).value, oracle::stage1(q, pos, negs, tau, cfg.lambda1, cfg.lambda2));
    cmp(stage2_loss(q, pos, negs, tau).value, oracle::infonce(q, pos, negs, tau));
    const std::vector<std::size_t> dims = {2, dim / 2 + 1, dim};
    if (dims[1] > dims[0] && dims[1] < dims[2]) {
      cmp(mrl_loss(q, pos, negs, dims, tau).value, oracle::mrl(q, pos, negs, dims, tau));
    }
    Vec ts;
    for (std::size_t i = 0; i <= nneg; ++i) ts.push_back(oracle::random_vec(g, 1)[0] * 0.5);
    if (nneg > 0) cmp(kd_loss(ts, q, pos, negs, tau).value, oracle::kd(ts, q, pos, negs, tau));
  }
  const double secs = since(t0);
  return {worst <= 1e-12 && secs < 30.0, "max abs diff " + sci(worst) + ", " + fmt(secs, 2) + "s"};
}

Outcome metric_values() {
  const auto t0 = Clock::now();
  std::mt19937_64 g(1003);
  double worst = 0.0;
  auto cmp = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + g() % 40;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("d" + std::to_string(i));
    std::shuffle(ids.begin(), ids.end(), g);
    std::set<std::string> rel;
    for (const auto& id : ids) {
      if (g() % 3 == 0) rel.insert(id);
    }
    if (g() % 5 == 0) rel.insert("unranked");
    Qrels qr;
    for (const auto& id : rel) qr.set("q", id, 1);
    RankedList r{"q", {}};
    for (std::size_t i = 0; i < ids.size(); ++i) r.entries.push_back({ids[i], 1.0 - 0.001 * i});
    const std::size_t k = 1 + g() % 20;
    cmp(ndcg_at_k(r, qr, k), oracle::ndcg(ids, rel, k));
    cmp(map_at_k(r, qr, k), oracle::ap(ids, rel, k));

    const std::size_t m = 3 + g() % 30;
    Vec a = oracle::random_vec(g, m), b = oracle::random_vec(g, m);
    for (double& x : b) x = std::round(x * 2.0);  // ties for the rank correlation
    b[0] = 5.0;                                  // never constant
    cmp(pearson(a, b), oracle::pearson(a, b));
    cmp(spearman(a, b), oracle::spearman(a, b));

    std::vector<std::vector<std::size_t>> counts;
    const std::size_t raters = 2 + trial % 3, cats = 2 + trial % 4;
    for (std::size_t i = 0, items = 2 + g() % 20; i < items; ++i) {
      std::vector<std::size_t> row(cats, 0);
      for (std::size_t j = 0; j < raters; ++j) ++row[g() % cats];
      counts.push_back(row);
    }
    cmp(fleiss_kappa(counts), oracle::fleiss(counts));
  }
  RankedList r2{"q", {{"x", 0.9}, {"a", 0.8}, {"y", 0.7}}};
  Qrels one;
  one.set("q", "a", 1);
  RankedList r3{"q", {{"a", 0.9}, {"x", 0.8}, {"b", 0.7}}};
  Qrels two;
  two.set("q", "a", 1);
  two.set("q", "b", 1);
  const Vec u = {1.0, 0.0};
  const double ln2 = infonce(u, u, {u}, 0.05).value;
  const double nd = ndcg_at_k(r2, one, 10);
  const double ap = map_at_k(r3, two, 10);
  const bool anchors = std::abs(ln2 - std::log(2.0)) < 1e-12 && std::abs(nd - 0.63093) < 5e-6 &&
                       std::abs(ap - 0.83333) < 5e-6;
  const double secs = since(t0);
  return {worst <= 1e-12 && anchors && secs < 30.0,
          "max abs diff " + sci(worst) + ", anchors ln2=" + fmt(ln2, 6) + " ndcg=" + fmt(nd, 5) +
              " map=" + fmt(ap, 5) + ", " + fmt(secs, 2) + "s"};
}

Outcome alignment() {
  const auto t0 = Clock::now();
  const RunConfig cfg;
  const auto data = generate_data(cfg);
  const auto pre = pretrain_models(data, cfg);
  auto student = pre.student;
  const auto r = stage1_align(student, pre.teacher, align_texts(data, cfg.vocab_size), cfg.stage(cfg.align));
  const double gain = r.heldout_cosine.back() - r.heldout_cosine.front();
  const bool loss_down = r.epoch_mean_losses.back() < r.epoch_mean_losses.front();
  const double secs = since(t0);
  return {gain >= 0.2 && loss_down && secs < 600.0,
          "held-out cosine " + fmt(r.heldout_cosine.front()) + " -> " + fmt(r.heldout_cosine.back()) +
              ", epoch loss " + fmt(r.epoch_mean_losses.front()) + " -> " + fmt(r.epoch_mean_losses.back()) + ", " +
              fmt(secs, 1) + "s"};
}

struct AblationResult {
  AblationTable table;
  double seconds = 0.0;
};

const AblationResult& ablation() {
  static const AblationResult res = [] {
    const auto t0 = Clock::now();
    const RunConfig cfg;
    const auto specs = default_ablations();
    const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    AblationResult r{run_ablations(cfg, specs, seeds, [](const std::string& m) { std::cerr << "  " << m << "\n"; }),
                     0.0};
    r.seconds = since(t0);
    std::cerr << r.table.table();
    return r;
  }();
  return res;
}

double mean_of(Variant v) { return AblationRow::mean(ablation().table.find(v)->ndcg); }

Outcome ordering() {
  const auto& a = ablation();
  const double full = mean_of(Variant::full), ns2 = mean_of(Variant::no_stage2), ns1 = mean_of(Variant::no_stage1),
               dis = mean_of(Variant::distill);
  const bool ok = full > ns2 && ns2 > ns1 && full > dis && a.seconds < 3600.0;
  return {ok, "nDCG@10 over " + std::to_string(a.table.seeds.size()) + " seeds: full " + fmt(full) + ", no_stage2 " +
                  fmt(ns2) + ", no_stage1 " + fmt(ns1) + ", distill " + fmt(dis) + ", " + fmt(a.seconds, 0) + "s"};
}

Outcome self_vs_supervised() {
  const double full = mean_of(Variant::full), sup = mean_of(Variant::supervised_stage1);
  return {full > sup, "self-contrastive " + fmt(full) + " vs supervised " + fmt(sup)};
}

Outcome dedup() {
  auto at = [](double deg) {
    const double r = deg * std::numbers::pi / 180.0;
    return Vec{std::cos(r), std::sin(r)};
  };
  // Seed a; b has one close neighbor (kept); c has two (dropped); d is far
  // (kept); e has one (kept); f has two (dropped).
  const std::vector<Vec> xs = {at(0), at(10), at(5), at(90), at(95), at(92)};
  CurationParams p{2, 0.9, 1, 1, true};
  const bool hand = diversify(xs, p) == std::vector<std::size_t>{0, 1, 3, 4};

  std::mt19937_64 g(1007);
  std::vector<Vec> far;
  for (int i = 0; i < 300; ++i) far.push_back(oracle::random_unit(g, 48));
  double max_sim = -1.0;
  for (std::size_t i = 0; i < far.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) max_sim = std::max(max_sim, dot(far[i], far[j]));
  }
  CurationParams q{5, 0.85, 0, 20, true};
  const bool all_kept = max_sim < q.t && diversify(far, q).size() == far.size();
  return {hand && all_kept, std::string("hand simulation ") + (hand ? "matches" : "differs") +
                                ", all-below-threshold max sim " + fmt(max_sim, 3) + " kept " +
                                std::to_string(diversify(far, q).size()) + "/" + std::to_string(far.size())};
}

Outcome consensus() {
  std::size_t checked = 0, wrong = 0;
  auto good = [](Grade x) { return x == Grade::S || x == Grade::A; };
  for (Grade a : kAllGrades) {
    for (Grade b : kAllGrades) {
      for (Grade c : kAllGrades) {
        const Consensus expect = good(a) && good(b) && good(c)     ? Consensus::positive
                                 : !good(a) && !good(b) && !good(c) ? Consensus::negative
                                                                    : Consensus::discarded;
        const std::vector<JudgeVerdict> v = {{"j0", a}, {"j1", b}, {"j2", c}};
        std::array<int, 3> perm = {0, 1, 2};
        do {
          const std::vector<JudgeVerdict> pv = {v[perm[0]], v[perm[1]], v[perm[2]]};
          ++checked;
          wrong += consensus_label(pv) != expect;
        } while (std::next_permutation(perm.begin(), perm.end()));
      }
    }
  }
  return {wrong == 0, std::to_string(checked) + " ordered triples (125 x 6 permutations), " + std::to_string(wrong) +
                          " mismatches"};
}

/// Median of per-round query throughput, alternating the two setups so drift
/// affects both equally.
std::pair<double, double> paired_qps(const EncoderParams& sa, const VectorIndex& ia, const EncoderParams& sb,
                                    const VectorIndex& ib, std::span<const std::string> qs) {
  Vec a, b;
  for (int round = 0; round < 7; ++round) {
    a.push_back(bench_latency(sa, ia, qs, 3).qps);
    b.push_back(bench_latency(sb, ib, qs, 3).qps);
  }
  auto median = [](Vec v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  return {median(a), median(b)};
}

Outcome latency() {
  const auto t0 = Clock::now();
  const RunConfig cfg;
  const auto data = generate_data(cfg);
  const auto docs = detail::doc_texts(data.corpus);
  std::vector<std::string> qs;
  for (std::size_t i = 0; i < std::min<std::size_t>(200, data.test_queries.size()); ++i) {
    qs.push_back(data.test_queries[i].text);
  }
  const std::size_t dim = cfg.student_dims.back();
  const auto student = new_student(cfg);
  const auto teacher = new_teacher(cfg);
  auto big_dims = cfg.teacher_dims;
  for (auto& d : big_dims) d *= 4;
  const auto big_teacher = init_encoder(Role::teacher, cfg.vocab_size, big_dims, 77);
  const auto idx = build_index(teacher, docs, dim, cfg.threads);
  const auto big_idx = build_index(big_teacher, docs, dim, cfg.threads);
  const auto [qps_small, qps_big] = paired_qps(student, idx, student, big_idx, qs);
  const double change = std::abs(qps_big - qps_small) / qps_small;

  auto wide_dims = cfg.student_dims;
  for (std::size_t i = 0; i + 1 < wide_dims.size(); ++i) wide_dims[i] *= 16;
  const auto wide = init_encoder(Role::student, cfg.vocab_size, wide_dims, 78);
  const auto [qps_narrow, qps_wide] = paired_qps(student, idx, wide, idx, qs);
  const double secs = since(t0);
  return {change < 0.10 && qps_wide < qps_narrow && secs < 300.0,
          "teacher x4 width: qps " + fmt(qps_small, 0) + " vs " + fmt(qps_big, 0) + " (" + fmt(100 * change, 1) +
              "% change); wider student: qps " + fmt(qps_narrow, 0) + " -> " + fmt(qps_wide, 0) + ", " +
              fmt(secs, 1) + "s"};
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    // The config file is an input and names run-specific directories.
    if (!e.is_regular_file() || e.path().parent_path() == root) continue;
    std::string bytes = read_file(e.path().string());
    if (e.path().extension() == ".json") {
      auto j = Json::parse(bytes);
      if (j.is_object()) j.erase("timestamp");
      bytes = j.dump();
    }
    out[fs::relative(e.path(), root).string()] = std::move(bytes);
  }
  return out;
}

Outcome determinism() {
  auto c = fixture::tiny_config();
  c.data.clusters = 10;
  c.data.docs_per_cluster = 30;
  c.data.train_queries_per_cluster = 10;
  c.data.unlabeled_per_cluster = 20;
  std::vector<std::map<std::string, std::string>> runs;
  for (int run = 0; run < 2; ++run) {
    const auto dir = fs::path(fixture::temp_dir("determinism_" + std::to_string(run)));
    c.data_dir = (dir / "data").string();
    c.work_dir = (dir / "work").string();
    const auto cfg_path = (dir / "config.json").string();
    write_file(cfg_path, c.to_json().dump(2));
    for (const char* verb : {"gen-data", "curate", "pretrain", "align", "finetune", "distill", "index", "eval"}) {
      const char* argv[] = {"asym_retrieve", verb, "--config", cfg_path.c_str()};
      std::ostringstream out, err;
      if (cli::run(4, argv, out, err) != 0) return {false, std::string(verb) + " failed: " + err.str()};
    }
    runs.push_back(snapshot(dir));
  }
  std::vector<std::string> diff;
  for (const auto& [name, bytes] : runs[0]) {
    auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != bytes) diff.push_back(name);
  }
  if (runs[0].size() != runs[1].size()) diff.push_back("<file set>");
  std::size_t ckpts = 0;
  for (const auto& [name, _] : runs[0]) ckpts += name.ends_with(".ckpt");
  std::string detail = std::to_string(runs[0].size()) + " files compared (" + std::to_string(ckpts) +
                       " checkpoints), " + std::to_string(diff.size()) + " differ";
  for (const auto& d : diff) detail += " " + d;
  return {diff.empty() && ckpts >= 6, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradients of every loss and the encoder match central differences", gradients},
      {"loss values match the independent oracles", loss_values},
      {"metric values match the independent oracles and anchors", metric_values},
      {"Stage-I alignment raises held-out cosine by >= 0.2 and lowers the loss", alignment},
      {"ablation ordering full > no_stage2 > no_stage1 and full > distill", ordering},
      {"self-contrastive Stage I beats supervised Stage I", self_vs_supervised},
      {"diversity dedup follows the hand simulation and keeps well-separated sets", dedup},
      {"consensus labeling is exhaustive-correct and order-invariant", consensus},
      {"query latency is independent of teacher size and grows with student width", latency},
      {"two full pipeline runs produce byte-identical artifacts", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << n << ": " << criteria[i].first << " -- "
              << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
