#ifndef _LINUX_NET_H
#define _LINUX_NET_H

#include <linux/types.h>

struct socket;
struct sockaddr;

enum sock_type {
	SOCK_STREAM	= 1,
	SOCK_DGRAM	= 2,
	SOCK_RAW	= 3,
	SOCK_RDM	= 4,
	SOCK_SEQPACKET	= 5,
};

struct proto_ops {
	int family;
	int (*release) (struct socket *sock);
	int (*bind) (struct socket *sock, struct sockaddr *myaddr, int sockaddr_len);
	int (*setsockopt)(struct socket *sock, int level, int optname, char *optval, unsigned int optlen);
	int (*getsockopt)(struct socket *sock, int level, int optname, char *optval, int *optlen);
};

struct net_proto_family {
	int family;
	int (*create)(struct net *net, struct socket *sock, int protocol, int kern);
};

int sock_register(const struct net_proto_family *fam);

#endif
