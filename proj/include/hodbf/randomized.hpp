// Butterfly reconstruction from black-box products with random vectors.
#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>

#include "hodbf/butterfly.hpp"

namespace hodbf {

/// Matrix available only through products. `forward` computes y = A x and
/// `transpose` y = A^T x (plain transpose, no conjugation); both must be safe
/// to call concurrently.
struct LinearOperator {
  using Apply = std::function<void(const Eigen::Ref<const CMatrix>&, Eigen::Ref<CMatrix>)>;

  struct Counts {
    std::atomic<Index> forward{0};    // applied columns
    std::atomic<Index> transpose{0};
  };

  Index rows = 0;
  Index cols = 0;
  Apply forward;
  Apply transpose;
  std::shared_ptr<Counts> counts = std::make_shared<Counts>();

  CMatrix apply(const Eigen::Ref<const CMatrix>& x) const;
  CMatrix apply_transpose(const Eigen::Ref<const CMatrix>& x) const;
  void apply_into(const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y) const;
  void apply_transpose_into(const Eigen::Ref<const CMatrix>& x, Eigen::Ref<CMatrix> y) const;
  Index apply_count() const { return counts->forward + counts->transpose; }
};

/// Operator view of a butterfly; the butterfly must outlive the operator.
LinearOperator butterfly_operator(const Butterfly& bf);
LinearOperator dense_operator(const CMatrix& a);
LinearOperator zero_operator(Index rows, Index cols);

struct RandomOptions {
  double tol = 1e-3;
  Index initial_rank = 16;
  Index oversampling = 10;
  int probes = 20;
  int max_retries = 3;
  std::uint64_t seed = 0xb7f1;
};

struct RandomStats {
  Index forward_columns = 0;
  Index transpose_columns = 0;
  double probe_error = 0.0;
  int retries = 0;
};

class ReconstructionError : public Error {
 public:
  ReconstructionError(const std::string& what, double achieved) : Error(what), achieved_(achieved) {}
  double achieved() const { return achieved_; }

 private:
  double achieved_;
};

/// Butterfly with `levels` levels on the given row/column partitions whose
/// probe error against `op` is at most 10 * tol. Throws ReconstructionError
/// ("reconstruction tolerance unreachable") after the retries are spent.
Butterfly bf_random_matvec(const LinearOperator& op, const Partition& rows, const Partition& cols,
                           int levels, const RandomOptions& opt, RandomStats* stats = nullptr);

/// ||(op - bf) G||_F / ||op G||_F for a complex Gaussian block G.
double probe_error(const LinearOperator& op, const Butterfly& bf, int num_probes,
                   std::uint64_t seed = 0x9b0be);

/// Fills `out` with unit-variance complex Gaussian entries.
void fill_gaussian(Eigen::Ref<CMatrix> out, std::uint64_t seed);

}  // namespace hodbf
