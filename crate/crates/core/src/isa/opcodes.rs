//! Opcodes of the structural words the compiler emits directly.

use super::{IsaError, WordList};

macro_rules! opcodes {
    ($($field:ident = $tag:literal),* $(,)?) => {
        /// Opcode numbers of tags the compiler needs, resolved from a word list.
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub struct Opcodes {
            $(pub $field: u8,)*
        }

        impl Opcodes {
            pub fn from_wordlist(wl: &WordList) -> Result<Self, IsaError> {
                Ok(Opcodes {
                    $($field: wl.opcode_of_tag($tag).ok_or_else(|| {
                        IsaError::Malformed(format!("word list lacks required tag `{}`", $tag))
                    })?,)*
                })
            }
        }
    };
}

opcodes! {
    colon = "colon",
    semicolon = "semicolon",
    exit = "exit",
    if_ = "if",
    else_ = "else",
    endif = "endif",
    begin = "begin",
    until = "until",
    again = "again",
    while_ = "while",
    repeat = "repeat",
    do_ = "do",
    loop_ = "loop",
    end = "end",
    var = "var",
    array = "array",
    const_ = "const",
    import = "import",
    export = "export",
    addr = "addr",
    print_str = "print_str",
    exception = "exception",
    call = "call",
    ios_call = "ios_call",
    dios_ref = "dios_ref",
}
