"""Frozen reference values computed outside the package.

ODE values: scipy DOP853 (rtol 1e-13, atol 1e-15) on the affine system.
Spending values: scipy ``quad`` (epsrel 1e-14) of the DOP853 dense output.
Calibration: r=0.048, lambda=0.2712, sigma_theta=0.0655, theta_bar=theta0=0.9456,
T=1, rho=0.01 for every agent; agent with gamma=-2 is the terminal one.
"""

# gamma -> (A1, A2, A3) at s = 1
A_AT_1 = {
    -9.0: (-0.07332873330639494, -0.009367016606377216, -0.0009279764478622256),
    -3.0: (-0.15136510970127595, -0.019327881409723278, -0.0019195648207144787),
    -2.0: (-0.17848503518305153, -0.022785923502295424, -0.00226613134525496),
}

# gamma -> (A1, A2, A3) at s = 0.5
A_AT_HALF = {
    -9.0: (-0.04054388323538181, -0.002596878761030516, -0.00013647057715759686),
    -3.0: (-0.0840648224040336, -0.005383916267288255, -0.0002833001727891359),
    -2.0: (-0.09936990635697296, -0.0063637829809226705, -0.0003351005409427322),
}

# gamma -> unit-level spending value (consumers -9, -3; terminal -2)
S_VALUES = {
    -9.0: 0.9582051561122734,
    -3.0: 0.9400070967816752,
    -2.0: 0.8702777491762934,
}

# Monte Carlo (4e5 paths, 252 steps, antithetic) at y = 1, mean and standard error.
# Variants of the terminal value and of the discounting that drop the theta
# factor or use the alternative rate land far outside these bands.
MC_AT_Y1 = {
    -3.0: (0.93903, 0.00065),
    -2.0: (0.86937, 0.00100),
}

# Root of lambda^2 - gamma sigma_theta^2 / (1 - gamma)^2 on (0, 1): mpmath bisection, 30 digits.
GAMMA_LIMIT = 0.78589193316907657899
