#include "dsthcn/csvio.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace dsthcn::csv {

std::string format_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

namespace {

void atomic_write(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw input_error("cannot write " + tmp);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw input_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw input_error("rename failed: " + path);
}

} // namespace

void write_matrix(const std::string& path, const double* m, int rows, int cols,
                  const std::vector<std::string>& header) {
    std::string out;
    if (!header.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) out += ',';
            out += header[i];
        }
        out += '\n';
    }
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (c) out += ',';
            out += format_g(m[static_cast<std::size_t>(r) * cols + c]);
        }
        out += '\n';
    }
    atomic_write(path, out);
}

void write_incidence(const std::string& path, const IncidenceMatrix& inc) {
    std::vector<std::string> header;
    header.push_back("node");
    for (int e = 0; e < inc.edges; ++e) header.push_back("edge" + std::to_string(e));
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out += ',';
        out += header[i];
    }
    out += '\n';
    for (int v = 0; v < inc.nodes; ++v) {
        out += std::to_string(v);
        for (int e = 0; e < inc.edges; ++e) {
            out += ',';
            out += format_g(inc.at(v, e));
        }
        out += '\n';
    }
    atomic_write(path, out);
}

void write_edge_weights(const std::string& path, const IncidenceMatrix& inc) {
    std::string out = "edge,weight\n";
    for (int e = 0; e < inc.edges; ++e)
        out += std::to_string(e) + "," + format_g(inc.W[static_cast<std::size_t>(e)]) + "\n";
    atomic_write(path, out);
}

void write_operator(const std::string& path, const NormalizedOperator& op) {
    write_matrix(path, op.matrix.data(), op.n, op.n, {});
}

void write_metrics(const std::string& path, const std::vector<EpochMetrics>& history) {
    std::string out = "epoch,lr,train_loss,train_acc,val_loss,val_acc\n";
    for (const auto& e : history) {
        out += std::to_string(e.epoch);
        out += ',' + format_g(e.lr);
        out += ',' + format_g(e.train_loss);
        out += ',' + format_g(e.train_acc);
        out += ',' + format_g(e.val_loss);
        out += ',' + format_g(e.val_acc);
        out += '\n';
    }
    atomic_write(path, out);
}

void write_scores(const std::string& path, const Tensor& scores, const std::vector<int>& labels) {
    const int N = scores.dim(0), K = scores.dim(1);
    if (static_cast<int>(labels.size()) != N) throw input_error("scores/labels size mismatch");
    std::string out = "label";
    for (int k = 0; k < K; ++k) out += ",score" + std::to_string(k);
    out += '\n';
    for (int i = 0; i < N; ++i) {
        out += std::to_string(labels[static_cast<std::size_t>(i)]);
        for (int k = 0; k < K; ++k) out += ',' + format_g(scores.at2(i, k));
        out += '\n';
    }
    atomic_write(path, out);
}

Tensor read_scores(const std::string& path, std::vector<int>& labels) {
    std::ifstream f(path);
    if (!f) throw format_error("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw format_error("empty score file " + path);
    int K = 0;
    {
        std::stringstream ss(line);
        std::string cell;
        bool first = true;
        while (std::getline(ss, cell, ',')) {
            if (first) {
                if (cell != "label") throw format_error(path + ": expected 'label' header column");
                first = false;
            } else {
                ++K;
            }
        }
        if (K < 2) throw format_error(path + ": need at least 2 score columns");
    }
    labels.clear();
    std::vector<double> vals;
    int line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        int col = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                if (col == 0)
                    labels.push_back(std::stoi(cell));
                else
                    vals.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw format_error(path + ":" + std::to_string(line_no) + ": bad value '" + cell +
                                   "'");
            }
            ++col;
        }
        if (col != K + 1)
            throw format_error(path + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(K + 1) + " columns, got " + std::to_string(col));
    }
    Tensor t({static_cast<int>(labels.size()), K});
    t.data = std::move(vals);
    return t;
}

} // namespace dsthcn::csv
