#ifndef _LINUX_SOCKET_H
#define _LINUX_SOCKET_H

#define AF_RDS		21
#define PF_RDS		AF_RDS
#define SOL_RDS		276

#endif
