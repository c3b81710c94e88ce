#include "cft/prompts.hpp"

#include <stdexcept>
#include <utility>

namespace cft {
namespace {

void check_xs(const std::vector<Eigen::VectorXd>& xs, int d, const char* who) {
  if (xs.empty()) throw std::invalid_argument(std::string(who) + ": k must be >= 1");
  for (const auto& x : xs) {
    if (static_cast<int>(x.size()) != d) {
      throw std::invalid_argument(std::string(who) + ": input dimension mismatch");
    }
  }
}

// Scalar y enters as (y, 0, ..., 0) of width d.
void put_pair(PromptSequence& p, int row, const Eigen::VectorXd& x, double y,
              Section section, bool supervised, double target) {
  p.tokens.row(row) = x.transpose();
  p.roles[row] = Role::x;
  p.sections[row] = section;
  p.loss_mask[row] = supervised;
  p.targets[row] = supervised ? target : 0.0;

  p.tokens.row(row + 1).setZero();
  p.tokens(row + 1, 0) = y;
  p.roles[row + 1] = Role::y;
  p.sections[row + 1] = section;
  p.loss_mask[row + 1] = false;
  p.targets[row + 1] = 0.0;
}

PromptSequence blank(int length, int d, int k) {
  PromptSequence p;
  p.tokens = Matrix::Zero(length, d);
  p.roles.resize(length);
  p.sections.resize(length);
  p.loss_mask.assign(length, false);
  p.targets.assign(length, 0.0);
  p.k = k;
  return p;
}

}  // namespace

PromptSequence build_pretrain_prompt(const LinearTask& f,
                                     const std::vector<Eigen::VectorXd>& xs) {
  check_xs(xs, f.d(), "build_pretrain_prompt");
  const int k = static_cast<int>(xs.size());
  PromptSequence p = blank(2 * k, f.d(), k);
  for (int i = 0; i < k; ++i) {
    const double y = eval_f(f, xs[i]);
    put_pair(p, 2 * i, xs[i], y, Section::context, /*supervised=*/true, y);
  }
  return p;
}

PromptSequence build_cpt_prompt(const ComposedTask& g,
                                const std::vector<Eigen::VectorXd>& xs) {
  check_xs(xs, g.d(), "build_cpt_prompt");
  const int k = static_cast<int>(xs.size());
  PromptSequence p = blank(2 * k, g.d(), k);
  for (int i = 0; i < k; ++i) {
    const double y = eval_g(g, xs[i]);
    put_pair(p, 2 * i, xs[i], y, Section::target, /*supervised=*/true, y);
  }
  return p;
}

PromptSequence build_cft_prompt(const LinearTask& f, const ComposedTask& g,
                                const std::vector<Eigen::VectorXd>& xs,
                                bool loss_on_context) {
  if (g.w1 != f.w) {
    throw std::invalid_argument("build_cft_prompt: g.w1 must equal f.w (shared f)");
  }
  check_xs(xs, f.d(), "build_cft_prompt");
  const int k = static_cast<int>(xs.size());
  PromptSequence p = blank(4 * k, f.d(), k);
  for (int i = 0; i < k; ++i) {
    const double yf = eval_f(f, xs[i]);
    put_pair(p, 2 * i, xs[i], yf, Section::context, loss_on_context, yf);
  }
  for (int i = 0; i < k; ++i) {
    const double yg = eval_g(g, xs[i]);
    put_pair(p, 2 * k + 2 * i, xs[i], yg, Section::target, /*supervised=*/true, yg);
  }
  return p;
}

PromptSequence build_negcft_prompt(const ComposedTask& g,
                                   const std::vector<Eigen::VectorXd>& xs, Rng& rng,
                                   bool loss_on_context) {
  check_xs(xs, g.d(), "build_negcft_prompt");
  const int k = static_cast<int>(xs.size());
  PromptSequence p = blank(4 * k, g.d(), k);
  for (int i = 0; i < k; ++i) {
    const double noise = rng.uniform();  // r_i ~ U(0,1) replaces f(x_i)
    put_pair(p, 2 * i, xs[i], noise, Section::context, loss_on_context, noise);
  }
  for (int i = 0; i < k; ++i) {
    const double yg = eval_g(g, xs[i]);
    put_pair(p, 2 * k + 2 * i, xs[i], yg, Section::target, /*supervised=*/true, yg);
  }
  return p;
}

PromptSequence append_query(PromptSequence p, const Eigen::VectorXd& x_query) {
  if (static_cast<int>(x_query.size()) != p.d()) {
    throw std::invalid_argument("append_query: query dimension mismatch");
  }
  const int n = p.length();
  p.tokens.conservativeResize(n + 1, Eigen::NoChange);
  p.tokens.row(n) = x_query.transpose();
  p.roles.push_back(Role::x);
  p.sections.push_back(p.sections.empty() ? Section::context : p.sections.back());
  p.loss_mask.push_back(false);
  p.targets.push_back(0.0);
  return p;
}

PromptSequence append_query(PromptSequence p, const Eigen::VectorXd& x_query,
                            double target) {
  p = append_query(std::move(p), x_query);
  p.loss_mask.back() = true;
  p.targets.back() = target;
  return p;
}

}  // namespace cft
