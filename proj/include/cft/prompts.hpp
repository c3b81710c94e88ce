#pragma once

#include <cstdint>
#include <vector>

#include "cft/rng.hpp"
#include "cft/tasks.hpp"
#include "cft/tensor.hpp"

namespace cft {

enum class Role : uint8_t { x, y };
enum class Section : uint8_t { context, target };
enum class Strategy { pretrain, cpt, cft, neg_cft };

// A vector-token sequence. Scalars (y-values) are encoded as (y, 0, ..., 0)
// rows of the same width d as the inputs. loss_mask is true at an x-position
// whose next-token (the following y) prediction is supervised; targets[t]
// holds that supervised value where the mask is true.
struct PromptSequence {
  Matrix tokens;  // T x d
  std::vector<Role> roles;
  std::vector<Section> sections;
  std::vector<bool> loss_mask;
  std::vector<double> targets;
  int k = 0;

  int length() const { return static_cast<int>(tokens.rows()); }
  int d() const { return static_cast<int>(tokens.cols()); }
};

// 2k tokens (x_i, f(x_i)); every x-position supervised.
PromptSequence build_pretrain_prompt(const LinearTask& f,
                                     const std::vector<Eigen::VectorXd>& xs);

// 2k tokens (x_i, g(x_i)); every x-position supervised.
PromptSequence build_cpt_prompt(const ComposedTask& g,
                                const std::vector<Eigen::VectorXd>& xs);

// 4k tokens: context (x_i, f(x_i)) then target (x_i, g(x_i)) with the same
// xs in the same order; only target-section x-positions supervised.
// Rejects g whose w1 differs from f's w.
PromptSequence build_cft_prompt(const LinearTask& f, const ComposedTask& g,
                                const std::vector<Eigen::VectorXd>& xs,
                                bool loss_on_context = false);

// CFT structure, but context y-values are i.i.d. U(0,1) noise.
PromptSequence build_negcft_prompt(const ComposedTask& g,
                                   const std::vector<Eigen::VectorXd>& xs, Rng& rng,
                                   bool loss_on_context = false);

// Appends a trailing query x (role x, unsupervised unless target provided).
PromptSequence append_query(PromptSequence p, const Eigen::VectorXd& x_query);
PromptSequence append_query(PromptSequence p, const Eigen::VectorXd& x_query,
                            double target);

}  // namespace cft
