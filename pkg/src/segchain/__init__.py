"""Exact computations for coupling, separation and segregation of finite Markov chains."""

from .chain import (Distribution, MarkovChain, TimeLayeredChain, d, d_bar, evolve, limit_distribution,
                    load_chain, mixing_time, pair_tv, save_chain, time_layer, tv_distance, tv_sequence)
from .coupling import (MarkovianCouplingKernel, MeetingTimeDistribution, TrajectoryCoupling,
                       check_faithful, check_marginals, coupling_inequality_check, make_sticky,
                       meeting_time_distribution, segregation_bound_check, tmix_upper_bound)
from .errors import BudgetExceeded, ChainError, InvariantViolation
from .formulas import (KappaReport, best_constant_separation_bound, f_sup, kappa_experiment, nb_pmf,
                       tv_nb)
from .meetflow import (CouplingPlan, FlowNetwork, TrajectorySet, build_flow_network,
                       enumerate_trajectories, extract_coupling, max_flow, optimal_meeting_probability,
                       verify_duality)
from .separation import (SeparatingSequence, brute_force_optimal_separation, constant_separation,
                         constant_threshold_separation, cyclic_shift, separation_value)
from .zoo import (ZooChain, birth_death_chain, haggstrom_chain, lower_bound_chain, nb_chain,
                  two_state_chain)

__version__ = "0.1.0"
