#ifndef MLBL_MODEL_IO_H
#define MLBL_MODEL_IO_H

#include <iosfwd>
#include <string>

#include "mlbl/model.h"

namespace mlbl {

inline constexpr char kModelMagic[4] = {'M', 'L', 'B', 'L'};
inline constexpr uint32_t kModelFormatVersion = 1;

// Binary container, all integers and reals little-endian:
//
//   "MLBL" u32:version
//   u32:order u32:dim u8:context_additive u8:output_additive u8:class_based u8:0
//   u64:|V| u64:|F_q| u64:|F_r| u64:|C| u64:|F| f64:kappa
//   |V| x (str:type i64:count)            vocabulary, ids in order
//   |F| x str:factor                       factor vocabulary
//   |V| x (u32:k, k x u32:factor)          mu rows
//   |C|>0: |V| x u32:class                 partition
//   f64 blocks C_1..C_{n-1}, Q^(f), R^(f), b, S, t, row-major
//
// where str is u32:length followed by the UTF-8 bytes. Compiled word tables
// are rebuilt on load.
void save_model(const Model& model, std::ostream& out);
Model load_model(std::istream& in);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace mlbl

#endif
