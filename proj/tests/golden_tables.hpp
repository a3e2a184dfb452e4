#pragma once

// Per-layer output shapes and parameter counts of the reference architectures,
// transcribed row by row from their published tables. The pet_2 second conv row
// prints depth 38; the shape law and the following pool/flatten rows give 28.

#include <cstddef>
#include <string>
#include <vector>

namespace golden {

struct Row {
    const char* layer;
    std::vector<std::size_t> dims;  // without the batch axis
    std::size_t params;
};

struct Table {
    std::string model;
    std::vector<Row> rows;  // first row is the input
    std::size_t total;
    std::size_t non_trainable;
};

inline const std::vector<Table>& tables() {
    static const std::vector<Table> t = {
        {"pet_1",
         {
             {"Input", {79, 95, 68, 1}, 0},
             {"5 x 5 x 5 Conv3D (32), pad 0", {75, 91, 64, 32}, 4032},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {37, 45, 32, 32}, 0},
             {"Flatten", {1704960}, 0},
             {"FC (256)", {256}, 436470016},
             {"FC (3), softmax", {3}, 771},
         },
         436474819, 0},
        {"pet_2",
         {
             {"Input", {79, 95, 68, 1}, 0},
             {"5 x 5 x 5 Conv3D (32), pad 0", {75, 91, 64, 32}, 4032},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {37, 45, 32, 32}, 0},
             {"5 x 5 x 5 Conv3D (32), pad 0", {33, 41, 28, 32}, 128032},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {16, 20, 14, 32}, 0},
             {"Flatten", {143360}, 0},
             {"FC (256)", {256}, 36700416},
             {"FC (3), softmax", {3}, 771},
         },
         36833251, 0},
        {"pet_3",
         {
             {"Input", {79, 95, 68, 1}, 0},
             {"5 x 5 x 5 Conv3D (16), pad 0", {75, 91, 64, 16}, 2016},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {37, 45, 32, 16}, 0},
             {"5 x 5 x 5 Conv3D (64), pad 0", {33, 41, 28, 64}, 128064},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {16, 20, 14, 64}, 0},
             {"5 x 5 x 5 Conv3D (128), pad 0", {12, 16, 10, 128}, 1024128},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {6, 8, 5, 128}, 0},
             {"Flatten", {30720}, 0},
             {"FC (256)", {256}, 7864576},
             {"FC (3), softmax", {3}, 771},
         },
         9019555, 0},
        {"pet_6",
         {
             {"Input", {79, 95, 68, 1}, 0},
             {"3 x 3 x 3 Conv3D (16), pad 0", {77, 93, 66, 16}, 448},
             {"3 x 3 x 3 Conv3D (16), pad 0", {75, 91, 64, 16}, 6928},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {37, 45, 32, 16}, 0},
             {"3 x 3 x 3 Conv3D (64), pad 0", {35, 43, 30, 64}, 27712},
             {"3 x 3 x 3 Conv3D (64), pad 0", {33, 41, 28, 64}, 110656},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {16, 20, 14, 64}, 0},
             {"BatchNorm, momentum 0.99", {16, 20, 14, 64}, 256},
             {"3 x 3 x 3 Conv3D (128), pad 0", {14, 18, 12, 128}, 221312},
             {"3 x 3 x 3 Conv3D (128), pad 0", {12, 16, 10, 128}, 442496},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {6, 8, 5, 128}, 0},
             {"Flatten", {30720}, 0},
             {"Dropout (0.1)", {30720}, 0},
             {"FC (256)", {256}, 7864576},
             {"FC (3), softmax", {3}, 771},
         },
         8675155, 128},
        {"pet_8",
         {
             {"Input", {79, 95, 68, 1}, 0},
             {"3 x 3 x 3 Conv3D (16), pad 0", {77, 93, 66, 16}, 448},
             {"3 x 3 x 3 Conv3D (16), pad 0", {75, 91, 64, 16}, 6928},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {37, 45, 32, 16}, 0},
             {"3 x 3 x 3 Conv3D (64), pad 0", {35, 43, 30, 64}, 27712},
             {"3 x 3 x 3 Conv3D (64), pad 0", {33, 41, 28, 64}, 110656},
             {"3 x 3 x 3 Conv3D (64), pad 0", {31, 39, 26, 64}, 110656},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {15, 19, 13, 64}, 0},
             {"BatchNorm, momentum 0.9", {15, 19, 13, 64}, 256},
             {"3 x 3 x 3 Conv3D (128), pad 0", {13, 17, 11, 128}, 221312},
             {"3 x 3 x 3 Conv3D (128), pad 0", {11, 15, 9, 128}, 442496},
             {"3 x 3 x 3 Conv3D (128), pad 0", {9, 13, 7, 128}, 442496},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {4, 6, 3, 128}, 0},
             {"Flatten", {9216}, 0},
             {"Dropout (0.2)", {9216}, 0},
             {"FC (256)", {256}, 2359552},
             {"FC (128)", {128}, 32896},
             {"FC (3), softmax", {3}, 387},
         },
         3755795, 128},
        {"mri_1",
         {
             {"Input", {75, 90, 75, 1}, 0},
             {"5 x 5 x 5 Conv3D (32), pad 0", {71, 86, 71, 32}, 4032},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {35, 43, 35, 32}, 0},
             {"Flatten", {1685600}, 0},
             {"FC (200)", {200}, 337120200},
             {"Dropout (0.1)", {200}, 0},
             {"FC (3), softmax", {3}, 603},
         },
         337124835, 0},
        {"mri_3",
         {
             {"Input", {75, 90, 75, 1}, 0},
             {"5 x 5 x 5 Conv3D (16), pad 0", {71, 86, 71, 16}, 2016},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {35, 43, 35, 16}, 0},
             {"5 x 5 x 5 Conv3D (32), pad 0", {31, 39, 31, 32}, 64032},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {15, 19, 15, 32}, 0},
             {"5 x 5 x 5 Conv3D (64), pad 0", {11, 15, 11, 64}, 256064},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {5, 7, 5, 64}, 0},
             {"Flatten", {11200}, 0},
             {"Dropout (0.2)", {11200}, 0},
             {"FC (256)", {256}, 2867456},
             {"FC (3), softmax", {3}, 771},
         },
         3190339, 0},
        {"mri_4",
         {
             {"Input", {75, 90, 75, 1}, 0},
             {"5 x 5 x 5 Conv3D (16), pad 0", {71, 86, 71, 16}, 2016},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {35, 43, 35, 16}, 0},
             {"5 x 5 x 5 Conv3D (32), pad 0", {31, 39, 31, 32}, 64032},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {15, 19, 15, 32}, 0},
             {"3 x 3 x 3 Conv3D (64), pad 0", {13, 17, 13, 64}, 55360},
             {"3 x 3 x 3 Conv3D (64), pad 0", {11, 15, 11, 64}, 110656},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {5, 7, 5, 64}, 0},
             {"Flatten", {11200}, 0},
             {"Dropout (0.25)", {11200}, 0},
             {"FC (256)", {256}, 2867456},
             {"FC (3), softmax", {3}, 771},
         },
         3100291, 0},
        {"mri_6",
         {
             {"Input", {75, 90, 75, 1}, 0},
             {"3 x 3 x 3 Conv3D (16), pad 0", {73, 88, 73, 16}, 448},
             {"3 x 3 x 3 Conv3D (16), pad 0", {71, 86, 71, 16}, 6928},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {35, 43, 35, 16}, 0},
             {"3 x 3 x 3 Conv3D (32), pad 0", {33, 41, 33, 32}, 13856},
             {"3 x 3 x 3 Conv3D (32), pad 0", {31, 39, 31, 32}, 27680},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {15, 19, 15, 32}, 0},
             {"BatchNorm, momentum 0.9", {15, 19, 15, 32}, 128},
             {"3 x 3 x 3 Conv3D (64), pad 0", {13, 17, 13, 64}, 55360},
             {"3 x 3 x 3 Conv3D (64), pad 0", {11, 15, 11, 64}, 110656},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {5, 7, 5, 64}, 0},
             {"Flatten", {11200}, 0},
             {"Dropout (0.2)", {11200}, 0},
             {"FC (256)", {256}, 2867456},
             {"Dropout (0.1)", {256}, 0},
             {"FC (128)", {128}, 32896},
             {"FC (3), softmax", {3}, 387},
         },
         3115795, 64},
        {"mri_9",
         {
             {"Input", {121, 145, 121, 1}, 0},
             {"3 x 3 x 3 Conv3D (32), pad 0", {119, 143, 119, 32}, 896},
             {"3 x 3 x 3 Conv3D (32), pad 0", {117, 141, 117, 32}, 27680},
             {"2 x 2 x 2 MaxPooling3d, stride 2", {58, 70, 58, 32}, 0},
             {"3 x 3 x 3 Conv3D (64), pad 0", {56, 68, 56, 64}, 55360},
             {"3 x 3 x 3 Conv3D (64), pad 0", {54, 66, 54, 64}, 110656},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {27, 33, 27, 64}, 0},
             {"BatchNorm, momentum 0.9", {27, 33, 27, 64}, 256},
             {"3 x 3 x 3 Conv3D (128), pad 0", {25, 31, 25, 128}, 221312},
             {"3 x 3 x 3 Conv3D (128), pad 0", {23, 29, 23, 128}, 442496},
             {"2 x 2 x 2 MaxPooling3D, stride 2", {11, 14, 11, 128}, 0},
             {"BatchNorm, momentum 0.9", {11, 14, 11, 128}, 512},
             {"3 x 3 x 3 Conv3D (256), pad 0", {9, 12, 9, 256}, 884992},
             {"3 x 3 x 3 Conv3D (256), pad 0", {7, 10, 7, 256}, 1769728},
             {"3 x 3 x 3 Conv3D (256), pad 0", {5, 8, 5, 256}, 1769728},
             {"GlobalAveragePooling3D", {256}, 0},
             {"Dropout (0.2)", {256}, 0},
             {"FC (128)", {128}, 32896},
             {"Dropout (0.2)", {128}, 0},
             {"FC (128)", {128}, 16512},
             {"FC (3), softmax", {3}, 387},
         },
         5333411, 384},
    };
    return t;
}

}  // namespace golden
