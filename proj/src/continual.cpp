#include "condet/continual.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "condet/error.hpp"
#include "condet/rng.hpp"

namespace condet {

using nlohmann::json;
using nlohmann::ordered_json;

void ReplayConfig::validate(int n_categories) const {
  if (per_task_quota < 0 || capacity < per_task_quota) {
    throw ValidationError("replay config requires capacity >= per_task_quota >= 0");
  }
  for (int c : rare_categories) {
    if (c < 1 || c > n_categories) {
      throw ValidationError("replay config: rare category " + std::to_string(c) +
                            " is not a valid category id");
    }
  }
}

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 0) {
    throw ValidationError("replay buffer capacity must be non-negative");
  }
}

void ReplayBuffer::add(const Corpus& corpus, std::span<const std::int64_t> selection,
                       int source_task, const std::set<int>& rare_categories) {
  if (size() + static_cast<int>(selection.size()) > capacity_) {
    const int excess = size() + static_cast<int>(selection.size()) - capacity_;
    throw ValidationError("replay buffer capacity " + std::to_string(capacity_) +
                          " exceeded by " + std::to_string(excess) + " image(s)");
  }
  std::unordered_set<std::int64_t> present;
  for (const ReplayEntry& e : entries_) present.insert(e.image_id);
  for (std::int64_t id : selection) {
    if (!present.insert(id).second) {
      throw ValidationError("replay buffer already holds image " + std::to_string(id));
    }
  }
  for (std::int64_t id : selection) {
    entries_.push_back(ReplayEntry{id, source_task,
                                   rare_count(id, corpus, rare_categories)});
  }
}

int rare_count(std::int64_t image_id, const Corpus& corpus,
               const std::set<int>& rare_categories) {
  if (corpus.find_image(image_id) == nullptr) {
    throw ValidationError("rare_count: unknown image " + std::to_string(image_id));
  }
  int count = 0;
  for (int gi : corpus.gts_of_image(image_id)) {
    if (rare_categories.count(
            corpus.ground_truth()[static_cast<std::size_t>(gi)].category_id)) {
      ++count;
    }
  }
  return count;
}

std::vector<std::int64_t> select_replay(std::span<const std::int64_t> task_images,
                                        const Corpus& corpus,
                                        const ReplayConfig& config) {
  config.validate(corpus.n_categories());
  struct Scored {
    std::int64_t image_id;
    int rare;
  };
  std::vector<Scored> scored;
  scored.reserve(task_images.size());
  for (std::int64_t id : task_images) {
    scored.push_back(Scored{id, rare_count(id, corpus, config.rare_categories)});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.rare != b.rare) return a.rare > b.rare;
    return a.image_id < b.image_id;
  });
  const std::size_t take =
      std::min(scored.size(), static_cast<std::size_t>(config.per_task_quota));
  std::vector<std::int64_t> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(scored[i].image_id);
  return out;
}

std::vector<std::int64_t> select_replay(const Corpus& corpus, int task_id,
                                        const ReplayConfig& config) {
  const std::vector<std::int64_t> ids = corpus.task_images(task_id);
  return select_replay(ids, corpus, config);
}

void DistillConfig::validate() const {
  if (!(0 < n_sampled && n_sampled <= n_candidates)) {
    throw ValidationError("distill config requires 0 < n_sampled <= n_candidates");
  }
}

DistillSelection distill_select(const ProposalSet& proposals,
                                const DistillConfig& config) {
  config.validate();
  if (proposals.empty()) {
    throw ValidationError("distill_select requires at least one proposal");
  }
  std::vector<int> order(proposals.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&proposals](int a, int b) {
    const double sa = proposals[static_cast<std::size_t>(a)].background_score;
    const double sb = proposals[static_cast<std::size_t>(b)].background_score;
    if (sa != sb) return sa < sb;
    return a < b;
  });

  DistillSelection sel;
  const std::size_t n_cand =
      std::min(order.size(), static_cast<std::size_t>(config.n_candidates));
  sel.candidates.assign(order.begin(), order.begin() + static_cast<long>(n_cand));

  if (static_cast<std::size_t>(config.n_sampled) > n_cand) {
    throw ValidationError("distill_select: n_sampled " +
                          std::to_string(config.n_sampled) + " exceeds the " +
                          std::to_string(n_cand) + " available candidate(s)");
  }

  // Partial Fisher-Yates over a copy keeps the draw uniform and seed-stable.
  std::vector<int> pool = sel.candidates;
  Rng rng = Rng(config.seed).substream("distill");
  for (int k = 0; k < config.n_sampled; ++k) {
    const std::size_t j =
        static_cast<std::size_t>(k) +
        static_cast<std::size_t>(rng.below(pool.size() - static_cast<std::size_t>(k)));
    std::swap(pool[static_cast<std::size_t>(k)], pool[j]);
  }
  sel.sampled.assign(pool.begin(), pool.begin() + config.n_sampled);
  return sel;
}

double distill_l2_loss(const ProposalSet& teacher, const ProposalSet& student,
                       std::span<const int> sampled, LossReduction reduction) {
  if (teacher.size() != student.size()) {
    throw ValidationError("distill loss: teacher and student sets must be "
                          "index-aligned (sizes " +
                          std::to_string(teacher.size()) + " vs " +
                          std::to_string(student.size()) + ")");
  }
  double total = 0.0;
  for (int idx : sampled) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= teacher.size()) {
      throw ValidationError("distill loss: sampled index " + std::to_string(idx) +
                            " out of range");
    }
    const Proposal& t = teacher[static_cast<std::size_t>(idx)];
    const Proposal& s = student[static_cast<std::size_t>(idx)];
    if (t.logits.size() != s.logits.size()) {
      throw ValidationError("distill loss: proposal " + std::to_string(idx) +
                            " has mismatched logit lengths");
    }
    double box = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      const double d = t.box[k] - s.box[k];
      box += d * d;
    }
    double logit = 0.0;
    for (std::size_t k = 0; k < t.logits.size(); ++k) {
      const double d = t.logits[k] - s.logits[k];
      logit += d * d;
    }
    total += box + logit;
  }
  if (reduction == LossReduction::Mean && !sampled.empty()) {
    total /= static_cast<double>(sampled.size());
  }
  return total;
}

ProposalSet parse_proposals_json(const json& j) {
  if (!j.is_array()) {
    throw ParseError("proposal file: top level must be a JSON array");
  }
  ProposalSet proposals;
  proposals.reserve(j.size());
  int pos = 0;
  for (const json& p : j) {
    const std::string ctx = "proposals[" + std::to_string(pos++) + "]";
    if (!p.is_object()) throw ParseError(ctx + ": must be an object");
    Proposal prop;
    const json& box = p.contains("box") ? p.at("box") : json();
    if (!box.is_array() || box.size() != 4) {
      throw ParseError(ctx + ": 'box' must be an array of 4 numbers");
    }
    for (std::size_t k = 0; k < 4; ++k) {
      if (!box[k].is_number()) throw ParseError(ctx + ": 'box' must hold numbers");
      prop.box[k] = box[k].get<double>();
    }
    const json& logits = p.contains("logits") ? p.at("logits") : json();
    if (!logits.is_array() || logits.empty()) {
      throw ParseError(ctx + ": 'logits' must be a non-empty array");
    }
    for (const json& v : logits) {
      if (!v.is_number()) throw ParseError(ctx + ": 'logits' must hold numbers");
      prop.logits.push_back(v.get<double>());
    }
    if (!p.contains("background_score") || !p.at("background_score").is_number()) {
      throw ParseError(ctx + ": missing numeric 'background_score'");
    }
    prop.background_score = p.at("background_score").get<double>();
    if (prop.background_score < 0.0 || prop.background_score > 1.0) {
      throw ValidationError(ctx + ": background_score must lie in [0, 1]");
    }
    proposals.push_back(std::move(prop));
  }
  for (std::size_t i = 1; i < proposals.size(); ++i) {
    if (proposals[i].logits.size() != proposals[0].logits.size()) {
      throw ValidationError("proposals must share one logit length; entry " +
                            std::to_string(i) + " differs");
    }
  }
  return proposals;
}

ProposalSet parse_proposals(const std::string& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  return parse_proposals_json(j);
}

void TrainConfig::validate() const {
  if (base_lr <= 0.0) throw ValidationError("train config: base_lr must be positive");
  if (weight_decay < 0.0) {
    throw ValidationError("train config: weight_decay must be non-negative");
  }
  if (epochs < 1) throw ValidationError("train config: epochs must be >= 1");
  if (!(0.0 < lr_gamma && lr_gamma <= 1.0)) {
    throw ValidationError("train config: lr_gamma must lie in (0, 1]");
  }
  if (lr_step_epoch < 0 || lr_step_epoch > epochs) {
    throw ValidationError("train config: lr_step_epoch must lie in [0, epochs]");
  }
  if (batch_size < 1) throw ValidationError("train config: batch_size must be >= 1");
  if (min_size < 1 || max_size < min_size) {
    throw ValidationError("train config requires 1 <= min_size <= max_size");
  }
}

TrainConfig parse_train_config_json(const json& j) {
  if (!j.is_object()) {
    throw ParseError("train config: top level must be a JSON object");
  }
  TrainConfig config;
  auto num = [&j](const char* key, double fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_number()) {
      throw ParseError(std::string("train config: '") + key + "' must be a number");
    }
    return it->get<double>();
  };
  auto integer = [&j](const char* key, int fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_number_integer()) {
      throw ParseError(std::string("train config: '") + key + "' must be an integer");
    }
    return it->get<int>();
  };
  config.base_lr = num("base_lr", config.base_lr);
  config.weight_decay = num("weight_decay", config.weight_decay);
  config.epochs = integer("epochs", config.epochs);
  config.lr_step_epoch = integer("lr_step_epoch", config.lr_step_epoch);
  config.lr_gamma = num("lr_gamma", config.lr_gamma);
  config.batch_size = integer("batch_size", config.batch_size);
  config.min_size = integer("min_size", config.min_size);
  config.max_size = integer("max_size", config.max_size);
  config.validate();
  return config;
}

TrainConfig parse_train_config(const std::string& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  return parse_train_config_json(j);
}

ordered_json train_config_to_json(const TrainConfig& config) {
  return ordered_json{{"base_lr", config.base_lr},
                      {"weight_decay", config.weight_decay},
                      {"epochs", config.epochs},
                      {"lr_step_epoch", config.lr_step_epoch},
                      {"lr_gamma", config.lr_gamma},
                      {"batch_size", config.batch_size},
                      {"min_size", config.min_size},
                      {"max_size", config.max_size}};
}

double lr_at_epoch(const TrainConfig& config, int epoch) {
  config.validate();
  if (epoch < 0 || epoch >= config.epochs) {
    throw ValidationError("epoch " + std::to_string(epoch) +
                          " outside schedule range [0, " +
                          std::to_string(config.epochs) + ")");
  }
  return epoch < config.lr_step_epoch ? config.base_lr
                                      : config.base_lr * config.lr_gamma;
}

}  // namespace condet
