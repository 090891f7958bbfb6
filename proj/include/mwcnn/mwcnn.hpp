#pragma once

// Umbrella header: the whole library.

#include "mwcnn/tensor.hpp"
#include "mwcnn/wavelet.hpp"
#include "mwcnn/layers.hpp"
#include "mwcnn/model.hpp"
#include "mwcnn/image_io.hpp"
#include "mwcnn/train.hpp"
#include "mwcnn/oracle.hpp"
#include "mwcnn/selfcheck.hpp"
