#pragma once

#include <string>

#include "fedlmf/data.hpp"

namespace fedlmf {

/// Writes samples.tsv, graph.tsv, and meta.json under `dir` (created if
/// absent). Floating point values are printed in shortest round-trip form so
/// load(save(x)) == x field for field and identical configs produce
/// byte-identical files.
void save_dataset(const FederatedDataset& ds, const std::string& dir);

/// Inverse of save_dataset. Throws ParseError (with line number) on malformed
/// or truncated files.
FederatedDataset load_dataset(const std::string& dir);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace fedlmf
