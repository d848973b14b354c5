#pragma once

#include <string>
#include <vector>

#include "dsthcn/hypergraph.hpp"
#include "dsthcn/tensor.hpp"
#include "dsthcn/train.hpp"

namespace dsthcn::csv {

// shortest round-trippable-enough formatting, stable across runs
std::string format_g(double v);

void write_matrix(const std::string& path, const double* m, int rows, int cols,
                  const std::vector<std::string>& header);
void write_incidence(const std::string& path, const IncidenceMatrix& inc);
void write_edge_weights(const std::string& path, const IncidenceMatrix& inc);
void write_operator(const std::string& path, const NormalizedOperator& op);
void write_metrics(const std::string& path, const std::vector<EpochMetrics>& history);

// header "label,score0,...", one row per sample
void write_scores(const std::string& path, const Tensor& scores, const std::vector<int>& labels);
Tensor read_scores(const std::string& path, std::vector<int>& labels);

} // namespace dsthcn::csv
