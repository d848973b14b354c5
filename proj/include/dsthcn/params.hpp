#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dsthcn/tensor.hpp"

namespace dsthcn {

struct Param {
    std::string path;
    Tensor value;
    Tensor grad;
    Tensor velocity;       // SGD momentum state
    bool trainable = true; // false for running statistics buffers
    bool decay = true;     // weight decay applies

    explicit Param(std::string p, std::vector<int> shape)
        : path(std::move(p)), value(shape), grad(shape), velocity(std::move(shape)) {}
};

// Named parameter registry. Registration order is the canonical ordering used
// by the optimizer and the archive, so construction must be deterministic.
class ParamStore {
  public:
    Param* add(std::string path, std::vector<int> shape, bool trainable = true,
               bool decay = true);
    const std::vector<std::unique_ptr<Param>>& all() const { return items_; }
    Param* find(const std::string& path);
    void zero_grad();
    std::size_t param_count() const; // trainable elements only

    // JSON manifest at `json_path` plus a raw little-endian f32 blob sibling
    void save(const std::string& json_path) const;
    void load(const std::string& json_path);

  private:
    std::vector<std::unique_ptr<Param>> items_;
};

} // namespace dsthcn
