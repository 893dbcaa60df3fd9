"""
kinetic-gmsfem evaluation suite

Numerical checks for the fine solver, the snapshot and offline spaces, and the experiment driver.
"""
