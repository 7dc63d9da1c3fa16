"""Convergence of the Neumann potential solve for a harmonic field.

``x^2 - y^2`` is harmonic, so its normal derivative on the unit square is
compatible Neumann data.  The zero-mean P1 solution converges at second
order in L2 and first order in the H1 seminorm.
"""
import numpy as np

from nsf.verify import mms_study

study = mms_study((4, 8, 16, 32, 64))
print("     h        L2 error     H1 error")
for h, e0, e1 in zip(study["h"], study["l2"], study["h1"]):
    print(f"{h:8.5f}   {e0:.4e}   {e1:.4e}")
rates0 = np.diff(np.log(study["l2"])) / np.diff(np.log(study["h"]))
rates1 = np.diff(np.log(study["h1"])) / np.diff(np.log(study["h"]))
print(f"\nlocal L2 rates: {', '.join(f'{r:.3f}' for r in rates0)}")
print(f"local H1 rates: {', '.join(f'{r:.3f}' for r in rates1)}")
print(f"fitted orders: L2 {study['l2_order']:.3f}, H1 {study['h1_order']:.3f}")
