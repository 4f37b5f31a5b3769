#pragma once

#include "giamic/ablation.hpp"
#include "giamic/adam.hpp"
#include "giamic/config.hpp"
#include "giamic/config_io.hpp"
#include "giamic/data.hpp"
#include "giamic/encoder.hpp"
#include "giamic/errors.hpp"
#include "giamic/gradcheck.hpp"
#include "giamic/head.hpp"
#include "giamic/mir.hpp"
#include "giamic/model.hpp"
#include "giamic/msr.hpp"
#include "giamic/ops.hpp"
#include "giamic/params.hpp"
#include "giamic/tensor.hpp"
#include "giamic/train.hpp"
