#pragma once

#include <filesystem>
#include <string>

#include "asym/config.hpp"

namespace fixture {

/// A configuration small enough to run the whole pipeline in a few seconds.
inline asym::RunConfig tiny_config() {
  asym::RunConfig c;
  c.train.mrl_dims = {8, 16, 32};
  c.train.epochs = 2;
  c.train.batch_size = 16;
  c.align.epochs = 2;
  c.finetune.epochs = 2;
  c.distill.epochs = 2;
  c.vocab_size = 512;
  c.student_dims = {16, 8};
  c.teacher_dims = {32, 32};
  c.data.clusters = 6;
  c.data.clusters_per_group = 3;
  c.data.docs_per_cluster = 15;
  c.data.train_queries_per_cluster = 6;
  c.data.test_queries_per_cluster = 3;
  c.data.unlabeled_per_cluster = 10;
  c.data.terms_per_cluster = 8;
  c.data.terms_per_group = 8;
  c.data.background_terms = 60;
  c.seed_size = 10;
  c.pool_size = 20;
  return c;
}

/// Fresh empty directory under the system temp dir.
inline std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("asym_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace fixture
