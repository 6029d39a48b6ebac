#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "condet/corpus.hpp"
#include "condet/types.hpp"

namespace condet {

struct ReplayConfig {
  int capacity = 250;
  int per_task_quota = 83;
  std::set<int> rare_categories = {1, 2, 6};

  void validate(int n_categories) const;
};

struct ReplayEntry {
  std::int64_t image_id = 0;
  int source_task = 0;
  int rare_count = 0;
};

/// Bounded memory of past-task images. Single writer; add() rejects
/// duplicates and refuses to grow past capacity.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity);

  void add(const Corpus& corpus, std::span<const std::int64_t> selection,
           int source_task, const std::set<int>& rare_categories);

  const std::vector<ReplayEntry>& entries() const { return entries_; }
  int capacity() const { return capacity_; }
  int size() const { return static_cast<int>(entries_.size()); }

 private:
  int capacity_ = 0;
  std::vector<ReplayEntry> entries_;
};

/// Number of ground-truth boxes on one image whose category is rare.
/// Throws ValidationError for an unknown image.
int rare_count(std::int64_t image_id, const Corpus& corpus,
               const std::set<int>& rare_categories);

/// The replay policy: order a task's images by rare_count descending then
/// image_id ascending and keep the first per_task_quota.
std::vector<std::int64_t> select_replay(std::span<const std::int64_t> task_images,
                                        const Corpus& corpus,
                                        const ReplayConfig& config);
std::vector<std::int64_t> select_replay(const Corpus& corpus, int task_id,
                                        const ReplayConfig& config);

enum class LossReduction { Mean, Sum };

struct DistillConfig {
  int n_candidates = 128;
  int n_sampled = 64;
  std::uint64_t seed = 0;
  LossReduction reduction = LossReduction::Mean;

  void validate() const;  // requires 0 < n_sampled <= n_candidates
};

/// One region proposal: box regression outputs, per-class logits with the
/// background entry already removed, and the background probability used for
/// candidate ranking.
struct Proposal {
  std::array<double, 4> box{};
  std::vector<double> logits;
  double background_score = 0.0;
};

using ProposalSet = std::vector<Proposal>;

struct DistillSelection {
  std::vector<int> candidates;  // ascending background score, ties by index
  std::vector<int> sampled;     // seeded uniform draw without replacement
};

/// Ranks proposals by background score (ascending, ties by index), keeps the
/// n_candidates lowest, then samples n_sampled of them uniformly without
/// replacement using the config seed. Throws when fewer candidates exist
/// than n_sampled.
DistillSelection distill_select(const ProposalSet& proposals,
                                const DistillConfig& config);

/// Mean (or sum) over sampled proposals of squared box difference plus
/// squared logit difference. Throws on misaligned teacher/student sets or
/// out-of-range sample indices.
double distill_l2_loss(const ProposalSet& teacher, const ProposalSet& student,
                       std::span<const int> sampled,
                       LossReduction reduction = LossReduction::Mean);

/// Proposal file I/O: a JSON array of objects with box[4], logits, and
/// background_score in [0, 1].
ProposalSet parse_proposals_json(const nlohmann::json& j);
ProposalSet parse_proposals(const std::string& path);

struct TrainConfig {
  double base_lr = 0.01;
  double weight_decay = 0.0;
  int epochs = 10;
  int lr_step_epoch = 6;
  double lr_gamma = 0.1;
  int batch_size = 8;
  int min_size = 800;
  int max_size = 1333;

  void validate() const;
};

TrainConfig parse_train_config_json(const nlohmann::json& j);
TrainConfig parse_train_config(const std::string& path);
nlohmann::ordered_json train_config_to_json(const TrainConfig& config);

/// Step schedule: base_lr before lr_step_epoch, base_lr * lr_gamma from it
/// on. Throws when epoch is outside [0, epochs).
double lr_at_epoch(const TrainConfig& config, int epoch);

}  // namespace condet
