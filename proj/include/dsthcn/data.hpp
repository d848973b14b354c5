#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsthcn/skeleton.hpp"
#include "dsthcn/tensor.hpp"

namespace dsthcn {

struct SkeletonSample {
    int label = 0;
    Tensor tensor; // C×T×V
};

struct Dataset {
    int skeleton_id = 0; // 0=custom, 1=ntu25, 2=ucla20
    int class_count = 0;
    std::vector<SkeletonSample> samples;

    void validate() const;
};

// SKL binary format, little-endian:
//   magic "SKL1", u16 version=1, u8 skeleton id, u8 reserved=0, u32 K, u32 N,
//   then per sample: u32 label, u32 C, u32 T, u32 V, C*T*V f32 (index (c*T+t)*V+v)
void write_skl(const std::string& path, const Dataset& d);
Dataset read_skl(const std::string& path);

// center every frame on the center joint, scale by mean bone length of frame 0
SkeletonSample preprocess(const SkeletonSample& s, const SkeletonDefinition& sk);

// class-specific sinusoidal trajectories on the rest pose + Gaussian noise
Dataset gen_synthetic(int classes, int per_class, int frames, const SkeletonDefinition& sk,
                      int skeleton_id, uint64_t seed, double noise_sigma = 0.01);

} // namespace dsthcn
