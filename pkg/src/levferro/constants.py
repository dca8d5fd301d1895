"""Physical constants (CODATA 2018, via scipy.constants).

==========  =====================  ==================
symbol      value                  unit
==========  =====================  ==================
K_B         1.380649000e-23        J/K (exact)
HBAR        1.054571817e-34        J s (exact)
MU_0        1.256637062e-06        N/A^2
E_CHARGE    1.602176634e-19        C (exact)
C_LIGHT     2.997924580e+08        m/s (exact)
EV          1.602176634e-19        J (exact)
ALPHA       7.297352569e-03        1 (fine structure)
G_TRENTO    9.806740000e+00        m/s^2 (local gravity)
==========  =====================  ==================
"""

from scipy import constants as _c

K_B = _c.k
HBAR = _c.hbar
MU_0 = _c.mu_0
E_CHARGE = _c.e
C_LIGHT = _c.c
EV = _c.electron_volt
ALPHA = _c.fine_structure

# local gravitational acceleration of the reference laboratory
G_TRENTO = 9.80674

YEAR = _c.Julian_year
