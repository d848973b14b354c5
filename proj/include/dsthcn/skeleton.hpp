#pragma once

#include <array>
#include <string>
#include <vector>

#include "dsthcn/errors.hpp"

namespace dsthcn {

// Joint tree plus a canonical rest pose. parent[root] == root.
struct SkeletonDefinition {
    int joint_count = 0;
    std::vector<int> parent;
    int center_joint = 0;
    std::vector<std::array<double, 3>> rest_pose;

    std::vector<std::vector<int>> neighbors() const;
    // hop distances from `from` to every joint over the bone tree
    std::vector<int> hop_distances(int from) const;
    void validate() const;
};

// Builds parent links by BFS from the center joint over an undirected bone list.
SkeletonDefinition skeleton_from_bones(int joints, const std::vector<std::pair<int, int>>& bones,
                                       int center,
                                       std::vector<std::array<double, 3>> rest_pose);

SkeletonDefinition ntu25();
SkeletonDefinition ucla20();

// id used in the SKL header: 0=custom, 1=ntu25, 2=ucla20
SkeletonDefinition skeleton_by_id(int id);
SkeletonDefinition skeleton_by_name(const std::string& name);
int skeleton_id(const std::string& name);

} // namespace dsthcn
