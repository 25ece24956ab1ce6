#pragma once

#include "ssdr/augment.hpp"
#include "ssdr/experiments.hpp"
#include "ssdr/featmaps.hpp"
#include "ssdr/gradcheck.hpp"
#include "ssdr/image.hpp"
#include "ssdr/image_io.hpp"
#include "ssdr/init.hpp"
#include "ssdr/kernels/activation.hpp"
#include "ssdr/kernels/batchnorm.hpp"
#include "ssdr/kernels/conv.hpp"
#include "ssdr/kernels/loss.hpp"
#include "ssdr/kernels/pooling.hpp"
#include "ssdr/model.hpp"
#include "ssdr/network.hpp"
#include "ssdr/noise.hpp"
#include "ssdr/optim.hpp"
#include "ssdr/parallel.hpp"
#include "ssdr/params.hpp"
#include "ssdr/preprocess.hpp"
#include "ssdr/rng.hpp"
#include "ssdr/split.hpp"
#include "ssdr/synth.hpp"
#include "ssdr/tensor.hpp"
#include "ssdr/train.hpp"
#include "ssdr/weights_io.hpp"
