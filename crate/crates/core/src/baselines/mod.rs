//! Reference estimators: most-similar-neighbour kNN with annealed predictor
//! selection, and a Bayesian linear inversion sampled by MCMC.

pub mod bayes;
pub mod msn;
pub mod select;

pub use bayes::{
    bayes_linear_fit, bayes_linear_predict, BayesConfig, BayesLinearModel, BayesPrediction, Chain,
    SamplerSettings,
};
pub use msn::{knn_predict, msn_fit, Aggregation, KnnModel, MsnProjection};
pub use select::{loo_knn_objective, sa_select_predictors, SaSchedule, Selection};
