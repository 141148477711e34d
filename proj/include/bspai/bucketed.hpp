#pragma once

// Magnitude bucketing of a sparse matrix and the adaptive-precision SpMV.
//
// Row i of A is split into q disjoint buckets B_i1..B_iq by comparing |a_ij|
// with eps*||A||/u_k. Elements of bucket k are stored in format u_k, their
// partial inner product is accumulated in u_k, and the q partial sums are
// combined in u_1. With u_q = drop the smallest elements are discarded.
// The resulting normwise backward error satisfies
//   eps_nw <= (q-1) u_1 + c eps,
// with c from c_constant().

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bspai/error.hpp"
#include "bspai/precision.hpp"
#include "bspai/sparse_matrix.hpp"

namespace bspai {

enum class BucketNorm { max_abs, inf };

inline std::string_view to_string(BucketNorm n) { return n == BucketNorm::max_abs ? "max-abs" : "inf"; }

inline BucketNorm bucket_norm_from_name(std::string_view s) {
  if (s == "max-abs" || s == "max") return BucketNorm::max_abs;
  if (s == "inf") return BucketNorm::inf;
  throw Error("unknown bucket norm '" + std::string(s) + "'");
}

struct BucketScheme {
  std::vector<FpFormat> precisions;  // u_1 < u_2 < ... < u_q
  double eps_target = 0x1p-53;
  BucketNorm norm_choice = BucketNorm::max_abs;

  std::size_t q() const { return precisions.size(); }

  void validate() const {
    if (precisions.empty()) throw Error("bucket scheme needs at least one precision");
    for (std::size_t k = 1; k < precisions.size(); ++k) {
      if (!(precisions[k].unit_roundoff > precisions[k - 1].unit_roundoff)) {
        throw Error("bucket precisions must have strictly increasing unit roundoff");
      }
    }
    if (precisions.front().kind == FormatKind::drop) throw Error("the first bucket cannot be the drop format");
    if (!(eps_target >= precisions.front().unit_roundoff)) throw Error("bucket target accuracy must be >= u_1");
  }

  /// (double, single, half, drop) for double working precision, or
  /// (single, half, drop) for single.
  static BucketScheme ladder_for(const FpFormat& working, double eps, BucketNorm norm = BucketNorm::max_abs) {
    if (working.kind == FormatKind::dbl) return {{kDouble, kSingle, kHalf, kDrop}, eps, norm};
    if (working.kind == FormatKind::single) return {{kSingle, kHalf, kDrop}, eps, norm};
    if (working.kind == FormatKind::half) return {{kHalf, kDrop}, eps, norm};
    throw Error("no bucket ladder for working format '" + std::string(working.name) + "'");
  }

  /// Single bucket in `fmt`: the uniform-precision case.
  static BucketScheme uniform(const FpFormat& fmt) { return {{fmt}, fmt.unit_roundoff, BucketNorm::max_abs}; }
};

/// One bucket across all rows, stored as CSR with values in the bucket format.
struct Bucket {
  FpFormat format;
  std::vector<Index> row_ptr;
  std::vector<Index> col_idx;
  std::vector<double> values;

  Index count() const { return values.size(); }
  Index count(Index row) const { return row_ptr[row + 1] - row_ptr[row]; }
};

class BucketedMatrix {
public:
  BucketedMatrix() = default;
  BucketedMatrix(Index rows, Index cols, BucketScheme scheme, double norm_value, std::vector<Bucket> buckets)
      : rows_(rows), cols_(cols), scheme_(std::move(scheme)), norm_value_(norm_value), buckets_(std::move(buckets)) {}

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  std::size_t q() const { return buckets_.size(); }
  const BucketScheme& scheme() const { return scheme_; }
  double norm_value() const { return norm_value_; }
  const std::vector<Bucket>& buckets() const { return buckets_; }

  Index nnz() const {
    Index s = 0;
    for (const Bucket& b : buckets_) s += b.count();
    return s;
  }

  /// Total elements per bucket (the occupancy tuple).
  std::vector<Index> occupancy() const {
    std::vector<Index> occ;
    for (const Bucket& b : buckets_) occ.push_back(b.count());
    return occ;
  }

  /// p_ik for a given row.
  std::vector<Index> row_occupancy(Index i) const {
    std::vector<Index> p;
    for (const Bucket& b : buckets_) p.push_back(b.count(i));
    return p;
  }

  /// The matrix that bspmv effectively applies: stored values, drop bucket
  /// removed.
  SparseMatrix effective_matrix() const {
    std::vector<Triplet> t;
    for (const Bucket& b : buckets_) {
      if (b.format.kind == FormatKind::drop) continue;
      for (Index i = 0; i < rows_; ++i) {
        for (Index p = b.row_ptr[i]; p < b.row_ptr[i + 1]; ++p) t.push_back({i, b.col_idx[p], b.values[p]});
      }
    }
    return SparseMatrix::from_triplets(rows_, cols_, std::move(t));
  }

private:
  Index rows_ = 0;
  Index cols_ = 0;
  BucketScheme scheme_;
  double norm_value_ = 0.0;
  std::vector<Bucket> buckets_;
};

inline double bucket_norm(const SparseMatrix& a, BucketNorm n) { return n == BucketNorm::max_abs ? norm_max(a) : norm_inf(a); }

/// Index (0-based) of the bucket that receives magnitude `v`. The first
/// interval is open, the others are closed on the right.
inline std::size_t bucket_of(double v, const BucketScheme& scheme, double norm_value) {
  const std::size_t q = scheme.q();
  if (q == 1) return 0;
  const double base = scheme.eps_target * norm_value;
  auto threshold = [&](std::size_t k) { return base / scheme.precisions[k].unit_roundoff; };
  if (v > threshold(1)) return 0;
  if (v <= threshold(q - 1)) return q - 1;
  for (std::size_t k = 1; k + 1 < q; ++k) {
    if (v > threshold(k + 1) && v <= threshold(k)) return k;
  }
  return q - 1;  // unreachable for finite v
}

inline BucketedMatrix build_buckets(const SparseMatrix& a, const BucketScheme& scheme) {
  scheme.validate();
  const double nrm = bucket_norm(a, scheme.norm_choice);
  std::vector<Bucket> buckets(scheme.q());
  for (std::size_t k = 0; k < scheme.q(); ++k) {
    buckets[k].format = scheme.precisions[k];
    buckets[k].row_ptr.assign(a.rows() + 1, 0);
  }
  for (Index i = 0; i < a.rows(); ++i) {
    const auto cols = a.row_cols(i);
    const auto vals = a.row_values(i);
    for (Index p = 0; p < cols.size(); ++p) {
      Bucket& b = buckets[bucket_of(std::fabs(vals[p]), scheme, nrm)];
      b.col_idx.push_back(cols[p]);
      b.values.push_back(round_to(vals[p], b.format));
    }
    for (Bucket& b : buckets) b.row_ptr[i + 1] = b.values.size();
  }
  return {a.rows(), a.cols(), scheme, nrm, std::move(buckets)};
}

/// Adaptive-precision product y = M x. Per row, the partial sum of bucket k
/// is accumulated in u_k (ascending column order) and the partial sums are
/// added in u_1 in ascending k. The drop bucket contributes nothing.
inline Vector bspmv(const BucketedMatrix& m, std::span<const double> x) {
  if (x.size() != m.cols()) throw DimensionError("bspmv: vector length does not match matrix columns");
  const auto& buckets = m.buckets();
  Vector y(m.rows(), 0.0);
  if (buckets.empty()) return y;
  const Arith top(buckets.front().format);
  for (Index i = 0; i < m.rows(); ++i) {
    double yi = 0.0;
    for (std::size_t k = 0; k < buckets.size(); ++k) {
      const Bucket& b = buckets[k];
      if (b.format.kind == FormatKind::drop) continue;
      const Arith ar(b.format);
      double part = 0.0;
      for (Index p = b.row_ptr[i]; p < b.row_ptr[i + 1]; ++p) part = ar.add(part, ar.mul(b.values[p], x[b.col_idx[p]]));
      yi = k == 0 ? part : top.add(yi, part);
    }
    y[i] = yi;
  }
  return y;
}

enum class CConstantForm { printed, unsquared };

/// c = (1 + (q-1) u_1) + max_i sum_k p_ik^2 (1 + u_k)^2. The unsquared form
/// replaces p_ik^2 by p_ik.
inline double c_constant(const BucketedMatrix& m, CConstantForm form = CConstantForm::printed) {
  const auto& buckets = m.buckets();
  const double q = static_cast<double>(m.q());
  const double u1 = m.q() > 0 ? buckets.front().format.unit_roundoff : 0.0;
  double worst = 0.0;
  for (Index i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (const Bucket& b : buckets) {
      const double p = static_cast<double>(b.count(i));
      const double g = 1.0 + b.format.unit_roundoff;
      s += (form == CConstantForm::printed ? p * p : p) * g * g;
    }
    worst = std::max(worst, s);
  }
  return (1.0 + (q - 1.0) * u1) + worst;
}

/// ||y_hat - A x||_inf / (||A||_inf ||x||_inf) with A x formed in double-double.
inline double normwise_backward_error(const SparseMatrix& a, std::span<const double> x, std::span<const double> y_hat) {
  if (y_hat.size() != a.rows()) throw DimensionError("backward error: y_hat has the wrong length");
  const double na = norm_inf(a);
  const double nx = norm_inf(x);
  if (na == 0.0 || nx == 0.0) throw Error("backward error undefined for zero A or x");
  const std::vector<DoubleDouble> exact = spmv_quad(a, x);
  double num = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    const DoubleDouble d = DoubleDouble(y_hat[i]) - exact[i];
    num = std::max(num, std::fabs(d.hi + d.lo));
  }
  return num / (na * nx);
}

/// Storage cost of the mixed-precision layout relative to storing every
/// element in u_1.
inline double storage_ratio(std::span<const Index> occupancy, std::span<const FpFormat> formats) {
  if (occupancy.size() != formats.size() || formats.empty()) throw DimensionError("storage_ratio: tuple sizes differ");
  double bits = 0.0, total = 0.0;
  for (std::size_t k = 0; k < occupancy.size(); ++k) {
    bits += static_cast<double>(occupancy[k]) * formats[k].bits;
    total += static_cast<double>(occupancy[k]);
  }
  if (total == 0.0) return 1.0;
  return bits / (total * formats.front().bits);
}

inline double storage_ratio(const BucketedMatrix& m) {
  const std::vector<Index> occ = m.occupancy();
  return storage_ratio(occ, m.scheme().precisions);
}

// ---------------------------------------------------------------------------
// Serialization: a JSON header (scheme, occupancy, per-bucket structure) and
// a binary blob holding each bucket's values at the bucket's storage width,
// little-endian, bucket after bucket.

inline nlohmann::json bucketed_header(const BucketedMatrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["eps_target"] = m.scheme().eps_target;
  j["norm_choice"] = std::string(to_string(m.scheme().norm_choice));
  j["norm_value"] = m.norm_value();
  j["occupancy"] = m.occupancy();
  std::size_t offset = 0;
  for (const Bucket& b : m.buckets()) {
    nlohmann::json jb;
    jb["format"] = std::string(b.format.name);
    jb["row_ptr"] = b.row_ptr;
    jb["col_idx"] = b.col_idx;
    jb["blob_offset"] = offset;
    offset += b.count() * static_cast<std::size_t>(b.format.bits / 8);
    j["buckets"].push_back(jb);
  }
  j["blob_bytes"] = offset;
  return j;
}

inline std::vector<unsigned char> bucketed_blob(const BucketedMatrix& m) {
  std::vector<unsigned char> out;
  auto put = [&out](auto word) {
    for (std::size_t b = 0; b < sizeof(word); ++b) out.push_back(static_cast<unsigned char>((word >> (8 * b)) & 0xffu));
  };
  for (const Bucket& b : m.buckets()) {
    for (double v : b.values) {
      switch (b.format.kind) {
        case FormatKind::half: put(half_bits(v)); break;
        case FormatKind::single: put(std::bit_cast<std::uint32_t>(static_cast<float>(v))); break;
        case FormatKind::dbl: put(std::bit_cast<std::uint64_t>(v)); break;
        case FormatKind::drop: break;
        case FormatKind::quad: throw Error("quad buckets are not serializable");
      }
    }
  }
  return out;
}

inline BucketedMatrix bucketed_from(const nlohmann::json& j, std::span<const unsigned char> blob) {
  BucketScheme scheme;
  scheme.eps_target = j.at("eps_target").get<double>();
  scheme.norm_choice = bucket_norm_from_name(j.at("norm_choice").get<std::string>());
  std::vector<Bucket> buckets;
  for (const auto& jb : j.at("buckets")) {
    Bucket b;
    b.format = format_from_name(jb.at("format").get<std::string>());
    b.row_ptr = jb.at("row_ptr").get<std::vector<Index>>();
    b.col_idx = jb.at("col_idx").get<std::vector<Index>>();
    std::size_t off = jb.at("blob_offset").get<std::size_t>();
    const std::size_t width = static_cast<std::size_t>(b.format.bits / 8);
    if (off + width * b.col_idx.size() > blob.size()) throw Error("bucket blob is truncated");
    auto get = [&](std::size_t bytes) {
      std::uint64_t w = 0;
      for (std::size_t k = 0; k < bytes; ++k) w |= static_cast<std::uint64_t>(blob[off + k]) << (8 * k);
      off += bytes;
      return w;
    };
    for (std::size_t p = 0; p < b.col_idx.size(); ++p) {
      switch (b.format.kind) {
        case FormatKind::half: b.values.push_back(half_from_bits(static_cast<std::uint16_t>(get(2)))); break;
        case FormatKind::single: b.values.push_back(std::bit_cast<float>(static_cast<std::uint32_t>(get(4)))); break;
        case FormatKind::dbl: b.values.push_back(std::bit_cast<double>(get(8))); break;
        case FormatKind::drop: b.values.push_back(0.0); break;
        case FormatKind::quad: throw Error("quad buckets are not serializable");
      }
    }
    scheme.precisions.push_back(b.format);
    buckets.push_back(std::move(b));
  }
  return {j.at("rows").get<Index>(), j.at("cols").get<Index>(), std::move(scheme), j.at("norm_value").get<double>(),
          std::move(buckets)};
}

inline void save_bucketed(const BucketedMatrix& m, const std::string& json_path, const std::string& blob_path) {
  std::ofstream js(json_path);
  if (!js) throw Error("cannot write '" + json_path + "'");
  js << bucketed_header(m).dump(1) << '\n';
  const std::vector<unsigned char> blob = bucketed_blob(m);
  std::ofstream bs(blob_path, std::ios::binary);
  if (!bs) throw Error("cannot write '" + blob_path + "'");
  bs.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
}

inline BucketedMatrix load_bucketed(const std::string& json_path, const std::string& blob_path) {
  std::ifstream js(json_path);
  if (!js) throw Error("cannot read '" + json_path + "'");
  const nlohmann::json j = nlohmann::json::parse(js);
  std::ifstream bs(blob_path, std::ios::binary);
  if (!bs) throw Error("cannot read '" + blob_path + "'");
  const std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bs)), std::istreambuf_iterator<char>());
  return bucketed_from(j, blob);
}

}  // namespace bspai
