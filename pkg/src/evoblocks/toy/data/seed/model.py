"""Cubic fit pipeline tuned by block-level evolution.

Each marker-delimited block below carries one coefficient of
y_hat = BIAS + LINEAR*x + QUAD*x**2 + CUBIC*x**3. The bundled scorer reads
this file back, evaluates the polynomial against a fixed dataset, and reports
the mean squared error together with the count of non-zero coefficients.
"""

# @GE-BLOCK: BIAS
BIAS = 1.0
# @GE-END

# @GE-BLOCK: LINEAR
LINEAR = 0.0
# @GE-END

# @GE-BLOCK: QUAD
QUAD = 0.0
# @GE-END

# @GE-BLOCK: CUBIC
CUBIC = 0.25
# @GE-END
