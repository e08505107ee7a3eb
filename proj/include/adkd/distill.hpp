#pragma once

#include <cstdint>
#include <vector>

#include "adkd/datasets.hpp"
#include "adkd/nets.hpp"
#include "adkd/pretrain.hpp"

namespace adkd {

// Student training recipe. No augmentation is applied to distillation
// inputs, ever.
struct DistillConfig {
    float lr = 1e-5f;
    int epochs = 20;
    int batch_size = 32;
    std::uint64_t seed = 0;
};

// Trainable student regressed onto a frozen teacher of identical
// architecture.
struct StudentTeacherPair {
    Model student;
    Teacher teacher;

    static StudentTeacherPair make(const Teacher& teacher, std::uint64_t student_seed);
    // Pairs an existing student with a teacher; fingerprints must match.
    static StudentTeacherPair pair_up(Model student, Teacher teacher);
};

// Minimizes mse(student(x), teacher(x)) with Adam over the view's images.
// Returns mean training loss per epoch, entry 0 evaluated before training.
std::vector<double> train_student(StudentTeacherPair& pair, const NormalView& normal_train,
                                  const DistillConfig& cfg);

// Anomaly score for one input [C,H,W]: squared L2 distance between teacher
// and student projections.
double kd_score(const StudentTeacherPair& pair, const Tensor& x);

// Scores for a batch [N,C,H,W], one per row.
std::vector<double> kd_scores(const StudentTeacherPair& pair, const Tensor& batch);

// Maximum over per-patch scores.
double aggregate_patch_scores(const std::vector<double>& scores);

}  // namespace adkd
