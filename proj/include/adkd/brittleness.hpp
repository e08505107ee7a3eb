#pragma once

#include "adkd/distill.hpp"
#include "adkd/tensor.hpp"

namespace adkd {

struct BrittlenessReport {
    double numerator = 0.0;    // mean per-sample input-gradient L2 norm
    double denominator = 0.0;  // trace of the covariance of teacher-student diffs
    double score = 0.0;        // numerator / denominator
    int sample_count = 0;
    bool stop_teacher = true;
};

// Gradient of ||teacher(x) - student(x)||^2 with respect to x. With
// stop_teacher set (the default) the teacher output is a constant target;
// otherwise the gradient also flows through the teacher's forward pass.
Tensor input_gradient(const StudentTeacherPair& pair, const Tensor& x, bool stop_teacher = true);

// Average input-gradient L2 norm over the training set, normalized by the
// trace of the population covariance of per-sample output differences.
// Raises DegenerateVarianceError when the differences carry no variance.
BrittlenessReport brittleness_score(const StudentTeacherPair& pair,
                                    const Tensor& normal_train, bool stop_teacher = true);

}  // namespace adkd
