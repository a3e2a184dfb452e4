#pragma once

#include "vcnn/error.hpp"
#include "vcnn/rng.hpp"
#include "vcnn/volume.hpp"
#include "vcnn/ops.hpp"

#include "vcnn/nn/spec.hpp"
#include "vcnn/nn/summary.hpp"
#include "vcnn/nn/layers.hpp"
#include "vcnn/nn/model.hpp"
#include "vcnn/nn/resnet.hpp"
#include "vcnn/nn/checkpoint.hpp"

#include "vcnn/train/loss.hpp"
#include "vcnn/train/adam.hpp"
#include "vcnn/train/hyper.hpp"
#include "vcnn/train/trainer.hpp"

#include "vcnn/augment/affine.hpp"
#include "vcnn/augment/augment.hpp"

#include "vcnn/preprocess/preprocess.hpp"

#include "vcnn/eval/split.hpp"
#include "vcnn/eval/metrics.hpp"
#include "vcnn/eval/rkfold.hpp"

#include "vcnn/data/record.hpp"
#include "vcnn/data/dataset.hpp"
#include "vcnn/data/synthetic.hpp"
