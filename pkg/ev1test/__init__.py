"""ev1test - Testing the EV1 assumption on resolvable uncertainty with stated-choice probabilities."""

__version__ = '0.1.0'

import ev1test.api
import ev1test.cli
import ev1test.config
import ev1test.data_interface
import ev1test.dgp_models
import ev1test.iqr_models
import ev1test.moment_tests
import ev1test.quantile_regression
import ev1test.utils
