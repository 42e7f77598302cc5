#pragma once

#include "mambasod/backbone.hpp"
#include "mambasod/cmm.hpp"
#include "mambasod/decoder.hpp"
#include "mambasod/image_io.hpp"
#include "mambasod/metrics.hpp"
#include "mambasod/network.hpp"
#include "mambasod/ops.hpp"
#include "mambasod/params.hpp"
#include "mambasod/report_io.hpp"
#include "mambasod/ss2d.hpp"
#include "mambasod/ssm.hpp"
#include "mambasod/synth.hpp"
#include "mambasod/tensor.hpp"
#include "mambasod/weights_io.hpp"
