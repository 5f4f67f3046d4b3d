//! Published monthly and yearly results: mean waits, success rates and the
//! improvement percentages derived from them.

pub const WINDOWS: [&str; 13] = ["Jan", "Feb", "Mar", "Apr", "May", "June", "July", "Aug", "Sept", "Oct", "Nov", "Dec", "year"];

/// Mean waiting time in minutes: (NSS with, NSS without, SSS with, SSS
/// without, OSS with, OSS without).
pub const WAIT_MIN: [[f64; 6]; 13] = [
    [6.71, 8.87, 6.68, 8.01, 6.03, 7.45],
    [6.99, 9.11, 6.82, 8.17, 6.12, 7.62],
    [7.43, 9.21, 7.39, 9.15, 6.98, 8.51],
    [5.67, 8.49, 5.66, 7.23, 5.01, 6.74],
    [5.11, 7.30, 5.04, 6.78, 4.78, 6.08],
    [6.85, 8.43, 6.76, 8.10, 6.14, 7.97],
    [6.68, 8.56, 6.37, 7.81, 6.19, 7.55],
    [4.88, 6.67, 4.85, 6.50, 4.64, 6.16],
    [8.60, 10.28, 8.52, 10.21, 7.33, 8.68],
    [6.98, 8.83, 6.83, 8.75, 6.17, 7.78],
    [5.89, 7.64, 5.73, 7.65, 5.22, 7.06],
    [4.16, 5.65, 4.05, 6.18, 3.91, 5.30],
    [6.27, 8.14, 6.17, 7.80, 5.62, 7.11],
];

/// Trip success rate in percent, same column layout.
pub const SUCCESS_PCT: [[f64; 6]; 13] = [
    [87.32, 79.96, 89.44, 87.46, 90.79, 86.87],
    [83.67, 89.04, 92.69, 89.61, 93.63, 89.64],
    [92.16, 89.04, 92.69, 89.61, 93.63, 89.64],
    [80.20, 77.70, 81.93, 79.26, 82.31, 76.82],
    [89.96, 88.10, 94.05, 89.69, 96.77, 90.96],
    [83.11, 80.66, 85.34, 83.07, 89.27, 81.81],
    [86.05, 84.76, 89.14, 85.17, 91.79, 85.61],
    [89.27, 84.79, 91.09, 87.86, 94.01, 85.71],
    [79.87, 76.04, 82.31, 80.00, 85.91, 80.48],
    [82.79, 80.55, 85.32, 81.62, 89.79, 81.35],
    [74.99, 72.61, 78.35, 71.65, 81.27, 76.51],
    [79.52, 76.23, 83.65, 81.40, 87.66, 78.89],
    [83.91, 80.97, 86.79, 83.12, 89.59, 83.22],
];

/// Published improvements in percent: (NSS time, NSS rate, SSS time, SSS
/// rate, OSS time, OSS rate).
pub const IMPROVEMENT_PCT: [[f64; 6]; 13] = [
    [32.19, 9.20, 19.91, 2.26, 23.55, 4.51],
    [30.33, 1.63, 19.79, 5.17, 24.51, 6.29],
    [23.96, 3.50, 23.82, 3.44, 21.92, 4.45],
    [49.74, 3.22, 27.74, 3.37, 34.53, 7.15],
    [42.86, 2.11, 34.52, 4.86, 27.20, 6.39],
    [23.07, 3.04, 19.82, 2.73, 29.80, 9.12],
    [28.14, 1.52, 22.61, 4.66, 21.97, 7.22],
    [36.68, 5.28, 34.02, 3.68, 32.76, 9.68],
    [19.53, 5.04, 19.84, 2.89, 18.42, 6.75],
    [26.50, 2.78, 28.11, 4.53, 26.09, 10.37],
    [29.71, 3.28, 31.94, 9.35, 35.25, 6.22],
    [35.82, 4.32, 52.59, 2.76, 35.55, 11.12],
    [29.82, 3.63, 26.42, 4.42, 26.51, 7.65],
];
