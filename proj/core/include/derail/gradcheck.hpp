#pragma once

#include <string>
#include <vector>

#include "derail/corpus.hpp"
#include "derail/encoders.hpp"
#include "derail/model.hpp"

namespace derail {

struct TensorCheck {
  std::string name;
  double max_relative_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double tolerance = 1e-4;
  bool all_passed() const;
  std::vector<std::string> flagged() const;
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  // Test hook: tensors whose name ends with this get their analytic gradient doubled.
  std::string corrupt;
};

// Central differences of the loss against the analytic gradient, per tensor.
// Relative error per entry is |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport grad_check(FgcnModel& model, const Conversation& conv, const TextEmbeddingProvider& text,
                           const GradCheckOptions& options = {});

// A self-contained TSU model with small dimensions and a 3-turn scored conversation.
struct DeskInstance {
  Conversation conversation;
  HashToyEncoder encoder;
  FgcnModel model;
};

DeskInstance make_desk_instance(std::uint64_t seed = 7);

}  // namespace derail
