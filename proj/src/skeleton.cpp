#include "dsthcn/skeleton.hpp"

#include <deque>

namespace dsthcn {

std::vector<std::vector<int>> SkeletonDefinition::neighbors() const {
    std::vector<std::vector<int>> nb(static_cast<std::size_t>(joint_count));
    for (int v = 0; v < joint_count; ++v) {
        const int p = parent[static_cast<std::size_t>(v)];
        if (p != v) {
            nb[static_cast<std::size_t>(v)].push_back(p);
            nb[static_cast<std::size_t>(p)].push_back(v);
        }
    }
    return nb;
}

std::vector<int> SkeletonDefinition::hop_distances(int from) const {
    auto nb = neighbors();
    std::vector<int> dist(static_cast<std::size_t>(joint_count), -1);
    std::deque<int> q{from};
    dist[static_cast<std::size_t>(from)] = 0;
    while (!q.empty()) {
        const int v = q.front();
        q.pop_front();
        for (int u : nb[static_cast<std::size_t>(v)])
            if (dist[static_cast<std::size_t>(u)] < 0) {
                dist[static_cast<std::size_t>(u)] = dist[static_cast<std::size_t>(v)] + 1;
                q.push_back(u);
            }
    }
    return dist;
}

void SkeletonDefinition::validate() const {
    if (joint_count < 1) throw input_error("skeleton: no joints");
    if (static_cast<int>(parent.size()) != joint_count ||
        static_cast<int>(rest_pose.size()) != joint_count)
        throw input_error("skeleton: field sizes mismatch");
    if (center_joint < 0 || center_joint >= joint_count)
        throw input_error("skeleton: center joint out of range");
    int roots = 0;
    for (int v = 0; v < joint_count; ++v) {
        const int p = parent[static_cast<std::size_t>(v)];
        if (p < 0 || p >= joint_count) throw input_error("skeleton: parent out of range");
        if (p == v) ++roots;
    }
    if (roots != 1) throw input_error("skeleton: parent links must form one rooted tree");
    // connectivity check
    int root = 0;
    for (int v = 0; v < joint_count; ++v)
        if (parent[static_cast<std::size_t>(v)] == v) root = v;
    auto d = hop_distances(root);
    for (int v = 0; v < joint_count; ++v)
        if (d[static_cast<std::size_t>(v)] < 0) throw input_error("skeleton: disconnected joint");
}

SkeletonDefinition skeleton_from_bones(int joints, const std::vector<std::pair<int, int>>& bones,
                                       int center,
                                       std::vector<std::array<double, 3>> rest_pose) {
    std::vector<std::vector<int>> nb(static_cast<std::size_t>(joints));
    for (auto [a, b] : bones) {
        nb[static_cast<std::size_t>(a)].push_back(b);
        nb[static_cast<std::size_t>(b)].push_back(a);
    }
    SkeletonDefinition sk;
    sk.joint_count = joints;
    sk.center_joint = center;
    sk.rest_pose = std::move(rest_pose);
    sk.parent.assign(static_cast<std::size_t>(joints), -1);
    sk.parent[static_cast<std::size_t>(center)] = center;
    std::deque<int> q{center};
    while (!q.empty()) {
        const int v = q.front();
        q.pop_front();
        for (int u : nb[static_cast<std::size_t>(v)])
            if (sk.parent[static_cast<std::size_t>(u)] < 0) {
                sk.parent[static_cast<std::size_t>(u)] = v;
                q.push_back(u);
            }
    }
    sk.validate();
    return sk;
}

SkeletonDefinition ntu25() {
    // Kinect v2 joints, 0-based; center = joint 1 (middle of spine)
    const std::vector<std::pair<int, int>> bones = {
        {0, 1},   {1, 20},  {2, 20},  {3, 2},   {4, 20},  {5, 4},   {6, 5},   {7, 6},
        {8, 20},  {9, 8},   {10, 9},  {11, 10}, {12, 0},  {13, 12}, {14, 13}, {15, 14},
        {16, 0},  {17, 16}, {18, 17}, {19, 18}, {21, 7},  {22, 7},  {23, 11}, {24, 11}};
    std::vector<std::array<double, 3>> pose = {
        {0.00, 0.00, 0.00},  // 0 base of spine
        {0.00, 0.25, 0.00},  // 1 middle of spine
        {0.00, 0.55, 0.00},  // 2 neck
        {0.00, 0.70, 0.00},  // 3 head
        {-0.20, 0.50, 0.00}, // 4 left shoulder
        {-0.35, 0.28, 0.00}, // 5 left elbow
        {-0.45, 0.08, 0.00}, // 6 left wrist
        {-0.50, 0.00, 0.00}, // 7 left hand
        {0.20, 0.50, 0.00},  // 8 right shoulder
        {0.35, 0.28, 0.00},  // 9 right elbow
        {0.45, 0.08, 0.00},  // 10 right wrist
        {0.50, 0.00, 0.00},  // 11 right hand
        {-0.10, -0.05, 0.00}, // 12 left hip
        {-0.12, -0.45, 0.00}, // 13 left knee
        {-0.13, -0.85, 0.00}, // 14 left ankle
        {-0.14, -0.92, 0.10}, // 15 left foot
        {0.10, -0.05, 0.00},  // 16 right hip
        {0.12, -0.45, 0.00},  // 17 right knee
        {0.13, -0.85, 0.00},  // 18 right ankle
        {0.14, -0.92, 0.10},  // 19 right foot
        {0.00, 0.45, 0.00},   // 20 spine (shoulder center)
        {-0.54, -0.03, 0.00}, // 21 left hand tip
        {-0.52, 0.03, 0.02},  // 22 left thumb
        {0.54, -0.03, 0.00},  // 23 right hand tip
        {0.52, 0.03, 0.02}};  // 24 right thumb
    return skeleton_from_bones(25, bones, 1, std::move(pose));
}

SkeletonDefinition ucla20() {
    // Kinect v1 joints, 0-based; center = joint 1 (spine)
    const std::vector<std::pair<int, int>> bones = {
        {0, 1},  {1, 2},   {2, 3},   {2, 4},   {4, 5},   {5, 6},   {6, 7},
        {2, 8},  {8, 9},   {9, 10},  {10, 11}, {0, 12},  {12, 13}, {13, 14},
        {14, 15}, {0, 16}, {16, 17}, {17, 18}, {18, 19}};
    std::vector<std::array<double, 3>> pose = {
        {0.00, 0.00, 0.00},   // 0 hip center
        {0.00, 0.25, 0.00},   // 1 spine
        {0.00, 0.50, 0.00},   // 2 shoulder center
        {0.00, 0.68, 0.00},   // 3 head
        {-0.20, 0.48, 0.00},  // 4 left shoulder
        {-0.34, 0.26, 0.00},  // 5 left elbow
        {-0.44, 0.06, 0.00},  // 6 left wrist
        {-0.50, -0.02, 0.00}, // 7 left hand
        {0.20, 0.48, 0.00},   // 8 right shoulder
        {0.34, 0.26, 0.00},   // 9 right elbow
        {0.44, 0.06, 0.00},   // 10 right wrist
        {0.50, -0.02, 0.00},  // 11 right hand
        {-0.10, -0.05, 0.00}, // 12 left hip
        {-0.12, -0.45, 0.00}, // 13 left knee
        {-0.13, -0.85, 0.00}, // 14 left ankle
        {-0.14, -0.92, 0.10}, // 15 left foot
        {0.10, -0.05, 0.00},  // 16 right hip
        {0.12, -0.45, 0.00},  // 17 right knee
        {0.13, -0.85, 0.00},  // 18 right ankle
        {0.14, -0.92, 0.10}}; // 19 right foot
    return skeleton_from_bones(20, bones, 1, std::move(pose));
}

SkeletonDefinition skeleton_by_id(int id) {
    switch (id) {
    case 1: return ntu25();
    case 2: return ucla20();
    default: throw input_error("unknown skeleton id " + std::to_string(id));
    }
}

SkeletonDefinition skeleton_by_name(const std::string& name) {
    return skeleton_by_id(skeleton_id(name));
}

int skeleton_id(const std::string& name) {
    if (name == "ntu25") return 1;
    if (name == "ucla20") return 2;
    throw input_error("unknown skeleton '" + name + "' (expected ntu25 or ucla20)");
}

} // namespace dsthcn
