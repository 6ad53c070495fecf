#pragma once

#include "ntscan/batch.hpp"
#include "ntscan/canny.hpp"
#include "ntscan/codec.hpp"
#include "ntscan/despeckle.hpp"
#include "ntscan/errors.hpp"
#include "ntscan/image.hpp"
#include "ntscan/meanshift.hpp"
#include "ntscan/measure.hpp"
#include "ntscan/phantom.hpp"
#include "ntscan/pipeline.hpp"
#include "ntscan/report.hpp"
#include "ntscan/service.hpp"
