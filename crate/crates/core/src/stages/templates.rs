use std::fs;
use std::io;
use std::path::Path;

macro_rules! templates {
    ($($field:ident),* $(,)?) => {
        /// Prompt templates. `{{name}}` placeholders are filled by the
        /// stages.
        #[derive(Debug, Clone, PartialEq, Eq)]
        pub struct Templates {
            $(pub $field: String,)*
        }

        impl Default for Templates {
            fn default() -> Self {
                Self {
                    $($field: include_str!(concat!("../../templates/", stringify!($field), ".md")).to_string(),)*
                }
            }
        }

        impl Templates {
            pub const NAMES: &'static [&'static str] = &[$(stringify!($field)),*];

            /// Defaults, overridden by any `<name>.md` present in `dir`.
            pub fn load(dir: &Path) -> io::Result<Self> {
                let mut t = Self::default();
                $(
                    let path = dir.join(concat!(stringify!($field), ".md"));
                    if path.is_file() {
                        t.$field = fs::read_to_string(&path)?;
                    }
                )*
                Ok(t)
            }
        }
    };
}

templates!(
    analyzer_system,
    analyzer_task,
    analyzer_retry,
    generator_system,
    generator_phase1,
    generator_phase2,
    checker_system,
    checker_signal,
    checker_reexecute,
    checker_adjudicate,
    extractor_system,
    extractor_task,
    extractor_revise,
    filter_system,
    filter_task,
);

/// Replaces each `{{key}}` with its value in one pass, so values are never
/// re-expanded.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let key = &after[..end];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[start..start + 4 + end]),
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes_once() {
        assert_eq!(
            render("a {{x}} b {{y}}", &[("x", "{{y}}"), ("y", "2")]),
            "a {{y}} b 2"
        );
        assert_eq!(render("{{unknown}} {{", &[]), "{{unknown}} {{");
    }

    #[test]
    fn overrides_from_dir() {
        let d = tempfile::tempdir().unwrap();
        fs::write(d.path().join("filter_task.md"), "custom {{title}}").unwrap();
        let t = Templates::load(d.path()).unwrap();
        assert_eq!(t.filter_task, "custom {{title}}");
        assert_eq!(t.analyzer_task, Templates::default().analyzer_task);
        assert_eq!(Templates::NAMES.len(), 15);
    }
}
