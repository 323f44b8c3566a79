use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Type {
    Scalar,
    Vec3,
    Mat3,
}

impl std::fmt::Display for Type {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Type::Scalar => "Scalar",
            Type::Vec3 => "Vec3",
            Type::Mat3 => "Mat3",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Svd,
    Det,
    Trace,
    Transpose,
    Inverse,
    Diag,
    Outer,
    Log,
    Exp,
    Sqrt,
    Abs,
    Pow,
    Min,
    Max,
    Clamp,
    VLog,
    VExp,
    VSum,
    VNorm,
    VMax,
    Dev,
    DevV,
    NormFro,
}

const NAMES: &[(&str, Builtin)] = &[
    ("svd", Builtin::Svd),
    ("det", Builtin::Det),
    ("trace", Builtin::Trace),
    ("transpose", Builtin::Transpose),
    ("inverse", Builtin::Inverse),
    ("diag", Builtin::Diag),
    ("outer", Builtin::Outer),
    ("log", Builtin::Log),
    ("exp", Builtin::Exp),
    ("sqrt", Builtin::Sqrt),
    ("abs", Builtin::Abs),
    ("pow", Builtin::Pow),
    ("min", Builtin::Min),
    ("max", Builtin::Max),
    ("clamp", Builtin::Clamp),
    ("vlog", Builtin::VLog),
    ("vexp", Builtin::VExp),
    ("vsum", Builtin::VSum),
    ("vnorm", Builtin::VNorm),
    ("vmax", Builtin::VMax),
    ("dev", Builtin::Dev),
    ("norm_fro", Builtin::NormFro),
];

pub fn is_builtin_fn(name: &str) -> bool {
    NAMES.iter().any(|(n, _)| *n == name)
}

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    NAMES.iter().map(|(n, _)| *n)
}

/// Resolves a call by name and argument types. `Svd` yields no single type and
/// is handled by the destructuring `let`.
pub fn resolve(name: &str, args: &[Type]) -> Result<(Builtin, Option<Type>), String> {
    use Type::*;
    let b = NAMES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, b)| *b)
        .ok_or_else(|| format!("unknown function `{name}`"))?;
    let sig = |want: &[Type], out: Type| -> Result<(Builtin, Option<Type>), String> {
        if args == want {
            Ok((b, Some(out)))
        } else {
            Err(format!(
                "`{name}` expects ({}) but got ({})",
                join(want),
                join(args)
            ))
        }
    };
    match b {
        Builtin::Svd => {
            if args == [Mat3] {
                Ok((b, None))
            } else {
                Err(format!("`svd` expects (Mat3) but got ({})", join(args)))
            }
        }
        Builtin::Det | Builtin::Trace | Builtin::NormFro => sig(&[Mat3], Scalar),
        Builtin::Transpose | Builtin::Inverse => sig(&[Mat3], Mat3),
        Builtin::Dev | Builtin::DevV => match args {
            [Mat3] => Ok((Builtin::Dev, Some(Mat3))),
            [Vec3] => Ok((Builtin::DevV, Some(Vec3))),
            _ => Err(format!("`dev` expects (Mat3) or (Vec3) but got ({})", join(args))),
        },
        Builtin::Diag => sig(&[Vec3], Mat3),
        Builtin::Outer => sig(&[Vec3, Vec3], Mat3),
        Builtin::Log | Builtin::Exp | Builtin::Sqrt | Builtin::Abs => sig(&[Scalar], Scalar),
        Builtin::Pow | Builtin::Min | Builtin::Max => sig(&[Scalar, Scalar], Scalar),
        Builtin::Clamp => sig(&[Scalar, Scalar, Scalar], Scalar),
        Builtin::VLog | Builtin::VExp => sig(&[Vec3], Vec3),
        Builtin::VSum | Builtin::VNorm => sig(&[Vec3], Scalar),
        Builtin::VMax => sig(&[Vec3, Scalar], Vec3),
    }
}

fn join(ts: &[Type]) -> String {
    ts.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
}
